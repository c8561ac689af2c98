//! Absolute and relative probabilities of alignments and inferences.
//!
//! An alignment's code is, by the nature of the search that produced it,
//! close to incompressible, so a code of `L` bits stands for one point in
//! a space of `2^L` equiprobable points and has absolute probability
//! `2^-L`. Absolute values are tiny and mostly useful in ratio, and ratios
//! are only meaningful between alignments that explain the same data: the
//! alignments encoding exactly the same data symbols as the best one form
//! a *reference set*, within which each member's share of the summed
//! absolute probability is its relative probability. Those shares then
//! flow outward: a stored pattern's probability is the share of the
//! members it appears in, and a symbol type's probability is the share of
//! the members whose patterns mention it — while symbol types observed in
//! the data itself are facts, pinned at probability one.

use std::collections::{BTreeMap, BTreeSet};

use crate::alignment::MultipleAlignment;
use crate::coding::CodeTable;
use crate::core::{Pattern, PatternId};

/// The probability of an alignment's code: `2^-L` where `L` is the code
/// length in bits. An empty code has probability 1 — reconstruction is
/// free, so nothing was inferred.
///
/// The alignment must already be scored.
pub fn absolute_probability(a: &MultipleAlignment) -> f64 {
    let score = a.score().expect("alignment must be scored");
    2f64.powf(-score.b_e)
}

/// The alignments that may fairly be compared with the best one: those
/// explaining exactly the same data symbols, edited and deduplicated.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    /// Data positions the best alignment explains.
    pub reference_symbols: BTreeSet<usize>,
    /// Member alignments, strongest first, after redundant-row removal
    /// and deduplication. Every member is scored.
    pub members: Vec<MultipleAlignment>,
    /// Sum of the members' absolute probabilities.
    pub p_a_sum: f64,
}

/// Builds the reference set from a collection of scored alignments (the
/// best is located by compression difference). With `supersets` false —
/// the normal setting — members must explain exactly the best alignment's
/// data symbols; with it true, any superset of them qualifies. Rows that
/// repeat another stored row's symbols in order are dropped as redundant,
/// members are rescored against `table`, and duplicates that editing
/// exposes are removed.
///
/// Returns `None` when `alignments` is empty.
pub fn build_reference_set(
    alignments: &[MultipleAlignment],
    table: &CodeTable,
    supersets: bool,
) -> Option<ReferenceSet> {
    let best = alignments.iter().max_by(|a, b| {
        let cd = |x: &MultipleAlignment| x.score().map(|s| s.cd).unwrap_or(f64::NEG_INFINITY);
        cd(a)
            .partial_cmp(&cd(b))
            .unwrap_or(std::cmp::Ordering::Equal)
            // On equal compression, prefer the one ranked earlier.
            .then(std::cmp::Ordering::Greater)
    })?;
    let reference_symbols = best.hit_new_positions();

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut members: Vec<MultipleAlignment> = Vec::new();
    for a in alignments {
        let hit = a.hit_new_positions();
        let qualifies = if supersets {
            hit.is_superset(&reference_symbols)
        } else {
            hit == reference_symbols
        };
        if !qualifies {
            continue;
        }
        let mut edited = strip_redundant_rows(a);
        edited.score_with(table);
        if seen.insert(edited.canonical_key()) {
            members.push(edited);
        }
    }
    members.sort_by(|a, b| {
        let b_e = |x: &MultipleAlignment| x.score().expect("scored above").b_e;
        b_e(a)
            .partial_cmp(&b_e(b))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.canonical_key().cmp(&b.canonical_key()))
    });
    let p_a_sum = members.iter().map(absolute_probability).sum();
    Some(ReferenceSet {
        reference_symbols,
        members,
        p_a_sum,
    })
}

/// Drops every stored row whose symbols all appear, in order, within
/// another surviving stored row. The data row is never touched: a stored
/// row echoing the data is the alignment's substance, not a redundancy.
fn strip_redundant_rows(a: &MultipleAlignment) -> MultipleAlignment {
    let tokens: Vec<Vec<&str>> = a
        .rows()
        .iter()
        .map(|r| r.symbols().iter().map(|s| s.token.as_str()).collect())
        .collect();
    let mut removed: BTreeSet<usize> = BTreeSet::new();
    for row in 1..tokens.len() {
        for other in 1..tokens.len() {
            if other == row || removed.contains(&other) {
                continue;
            }
            if is_subsequence(&tokens[row], &tokens[other]) {
                removed.insert(row);
                break;
            }
        }
    }
    if removed.is_empty() {
        a.clone()
    } else {
        a.without_rows(&removed)
    }
}

/// Whether `needle` appears within `haystack` with order preserved.
fn is_subsequence(needle: &[&str], haystack: &[&str]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// One reference-set member with its probabilities.
#[derive(Clone, Debug)]
pub struct MemberProbability {
    pub alignment: MultipleAlignment,
    pub p_abs: f64,
    pub p_rel: f64,
}

/// Probabilities for everything a reference set supports: its members,
/// the stored patterns appearing in them, and the symbol types those
/// patterns mention.
#[derive(Clone, Debug)]
pub struct InferenceReport {
    /// Data positions the members explain.
    pub reference_symbols: BTreeSet<usize>,
    /// Members, strongest first; relative probabilities sum to 1.
    pub members: Vec<MemberProbability>,
    /// Stored patterns and their shares, strongest first.
    pub patterns: Vec<(PatternId, f64)>,
    /// Symbol types and their shares, strongest first. Types observed in
    /// the data are exactly 1.
    pub symbols: Vec<(String, f64)>,
}

/// Distributes the reference set's probability mass: each member gets its
/// share of the summed absolute probability; each stored pattern the sum
/// over members it appears in (once per member); each symbol type the sum
/// over members whose patterns contain it (once per member). Symbol types
/// present in `new` are observations, pinned at exactly 1.
pub fn relative_probabilities(set: ReferenceSet, new: &Pattern) -> InferenceReport {
    let members: Vec<MemberProbability> = set
        .members
        .into_iter()
        .map(|alignment| {
            let p_abs = absolute_probability(&alignment);
            MemberProbability {
                p_abs,
                p_rel: p_abs / set.p_a_sum,
                alignment,
            }
        })
        .collect();

    let mut patterns: BTreeMap<PatternId, f64> = BTreeMap::new();
    let mut symbols: BTreeMap<String, f64> = BTreeMap::new();
    let new_types: BTreeSet<&str> = new.tokens().collect();
    for member in &members {
        let mut ids: BTreeSet<PatternId> = BTreeSet::new();
        let mut types: BTreeSet<&str> = BTreeSet::new();
        for row in member.alignment.rows().iter().skip(1) {
            if let Some(id) = row.pattern_id() {
                ids.insert(id);
            }
            for sym in row.symbols() {
                types.insert(&sym.token);
            }
        }
        for id in ids {
            *patterns.entry(id).or_insert(0.0) += member.p_rel;
        }
        for t in types {
            if !new_types.contains(t) {
                *symbols.entry(t.to_string()).or_insert(0.0) += member.p_rel;
            }
        }
    }
    for t in &new_types {
        symbols.insert((*t).to_string(), 1.0);
    }

    let mut patterns: Vec<(PatternId, f64)> = patterns.into_iter().collect();
    patterns.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut symbols: Vec<(String, f64)> = symbols.into_iter().collect();
    symbols.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });

    InferenceReport {
        reference_symbols: set.reference_symbols,
        members,
        patterns,
        symbols,
    }
}

// ── tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{make_pattern, NewStream, PatternStore, Role};
    use crate::search::{run, EngineConfig};
    use approx::assert_relative_eq;

    fn first_id(tokens: &str, frequency: u64) -> Pattern {
        let spec: Vec<(String, Role)> = tokens
            .split_whitespace()
            .enumerate()
            .map(|(i, t)| {
                (
                    t.to_string(),
                    if i == 0 { Role::Id } else { Role::Content },
                )
            })
            .collect();
        make_pattern(&spec, frequency).unwrap()
    }

    fn content(tokens: &str, frequency: u64) -> Pattern {
        let spec: Vec<(String, Role)> = tokens
            .split_whitespace()
            .map(|t| (t.to_string(), Role::Content))
            .collect();
        make_pattern(&spec, frequency).unwrap()
    }

    fn association_store() -> PatternStore {
        let mut store = PatternStore::new();
        for (tokens, f) in [
            ("clouds black rain", 15000),
            ("dangerous fire smoke", 500),
            ("heating fire smoke", 7000),
            ("tobacco fire smoke", 10000),
            ("fog smoke", 2000),
            ("stage smoke", 100),
            ("thunder lightning", 5000),
            ("strawberries cream", 1500),
        ] {
            store.add(first_id(tokens, f));
        }
        store
    }

    fn analyse(
        store: &PatternStore,
        new: &Pattern,
        cfg: &EngineConfig,
    ) -> InferenceReport {
        let result = run(store, new, cfg).unwrap();
        let set = build_reference_set(&result.alignments, &result.table, false).unwrap();
        relative_probabilities(set, new)
    }

    #[test]
    fn smoke_query_reproduces_the_association_tables() {
        let store = association_store();
        let new = content("smoke", 1);
        let report = analyse(&store, &new, &EngineConfig::default());

        assert_eq!(report.members.len(), 5);
        let p_rel: Vec<f64> = report.members.iter().map(|m| m.p_rel).collect();
        for (got, want) in p_rel
            .iter()
            .zip([0.51020, 0.35714, 0.10204, 0.02551, 0.00510])
        {
            assert_relative_eq!(got, &want, max_relative = 1e-3);
            assert!((got - want).abs() < 1e-4);
        }
        let p_abs: Vec<f64> = report.members.iter().map(|m| m.p_abs).collect();
        for (got, want) in p_abs.iter().zip([0.08718, 0.06103, 0.01744, 0.00436]) {
            assert!((got - want).abs() < 1e-4);
        }

        let lookup = |t: &str| -> f64 {
            report
                .symbols
                .iter()
                .find(|(tok, _)| tok == t)
                .map(|(_, p)| *p)
                .unwrap()
        };
        assert_eq!(lookup("smoke"), 1.0);
        for (tok, want) in [
            ("fire", 0.89286),
            ("tobacco", 0.51020),
            ("heating", 0.35714),
            ("fog", 0.10204),
            ("dangerous", 0.02551),
            ("stage", 0.00510),
        ] {
            assert!(
                (lookup(tok) - want).abs() < 1e-4,
                "symbol {tok}: got {} want {want}",
                lookup(tok)
            );
        }

        let total: f64 = report.members.iter().map(|m| m.p_rel).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn an_empty_code_is_a_certainty() {
        let mut store = PatternStore::new();
        store.add(content("a b", 4));
        let new = content("a b", 1);
        let result = run(&store, &new, &EngineConfig::default()).unwrap();
        let best = &result.alignments[0];
        assert!(best.derive_code().is_empty());
        assert_eq!(absolute_probability(best), 1.0);
    }

    #[test]
    fn singleton_reference_set_is_certain() {
        let mut store = PatternStore::new();
        store.add(first_id("lone marker", 10));
        store.add(first_id("other thing", 10));
        let new = content("marker", 1);
        let report = analyse(&store, &new, &EngineConfig::default());
        assert_eq!(report.members.len(), 1);
        assert_eq!(report.members[0].p_rel, 1.0);
        for (_, p) in &report.patterns {
            assert_eq!(*p, 1.0);
        }
    }

    #[test]
    fn shared_symbol_type_counts_once_per_member() {
        // Two stored patterns joined through a private symbol `s` that the
        // data never mentions. Every member of the reference set contains
        // both patterns — sometimes with a repeated appearance — so if `s`
        // were credited once per containing row instead of once per member,
        // its total would exceed certainty. It must come out at exactly 1.
        let mut store = PatternStore::new();
        store.add(first_id("P a s", 500));
        store.add(first_id("R s b", 500));
        let new = content("a b", 1);
        let report = analyse(&store, &new, &EngineConfig::default());
        assert!(!report.members.is_empty());
        for member in &report.members {
            let pids: BTreeSet<_> = member
                .alignment
                .rows()
                .iter()
                .filter_map(|r| r.pattern_id())
                .collect();
            assert_eq!(pids.len(), 2, "each member covers both data symbols");
        }
        let s = report
            .symbols
            .iter()
            .find(|(tok, _)| tok == "s")
            .map(|(_, p)| *p)
            .unwrap();
        assert!((s - 1.0).abs() < 1e-12, "s = {s}");
        for (_, p) in &report.symbols {
            assert!(*p <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn redundant_rows_are_edited_out_and_duplicates_collapse() {
        use crate::alignment::{ExtendTarget, MultipleAlignment};
        let mut store = PatternStore::new();
        store.add(first_id("X a b c", 50));
        store.add(content("a c", 50));
        let new = content("a b c", 1);
        let mut news = NewStream::new();
        news.push(new.clone());
        let table = CodeTable::derive(&store, &news, 2.0).unwrap();

        let x = store.iter().next().unwrap();
        let ac = store.iter().nth(1).unwrap();
        let bare = MultipleAlignment::from_new(&new);
        let mut full =
            MultipleAlignment::extend(&bare, ExtendTarget::Pattern(x), &[(0, 1), (1, 2), (2, 3)])
                .unwrap();
        // The two-symbol row repeats part of the long row: redundant.
        let mut with_extra =
            MultipleAlignment::extend(&full, ExtendTarget::Pattern(ac), &[(1, 0), (3, 1)])
                .unwrap();
        full.score_with(&table);
        with_extra.score_with(&table);

        let set =
            build_reference_set(&[full.clone(), with_extra], &table, false).unwrap();
        assert_eq!(set.members.len(), 1);
        assert_eq!(set.members[0].canonical_key(), full.canonical_key());
    }
}
