//! The heuristic search engine: repeated cycles of matching and
//! unification that grow multiple alignments between one data pattern and
//! a store of patterns.
//!
//! Each cycle takes a small set of *driving* alignments (initially just
//! the bare data pattern), projects each one into a single sequence, and
//! broadcasts that sequence against every target — the stored patterns
//! plus the alignments that survive from earlier cycles. The best hit
//! sequences are unified into new, larger alignments. At the end of the
//! cycle two selections narrow the search: a per-data-symbol quota keeps
//! the best alignments for every part of the data (not merely the best
//! overall, which could starve whole regions), and a smaller quota of the
//! survivors drives the next cycle.
//!
//! Growth that explains more of the data resets an alignment's
//! *unsupported step* count; growth that merely chains stored patterns
//! onto stored patterns increments it. A configurable cap stops such
//! speculation from running away while still allowing enough of it to
//! bridge gaps in the data.
//!
//! The data pattern may also be processed in fixed-size windows, left to
//! right, carrying the best alignments of each window forward into the
//! next.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use rayon::prelude::*;

use crate::alignment::{ExtendTarget, MultipleAlignment, Rejection};
use crate::coding::{CodeTable, CodingError};
use crate::core::{Pattern, PatternStore};
use crate::matcher::{broadcast_match, MatchParams};

/// How many hit sequences per target each driving alignment unifies in a
/// cycle. Sequences are ranked, so this keeps the several best placements
/// of a target while dropping the long tail of weak sub-sequences.
const SEQUENCES_PER_TARGET: usize = 12;

/// Tuning knobs for the engine.
#[derive(Clone, Debug)]
pub struct EngineConfig {
    /// How many surviving alignments drive the next cycle.
    pub driving_quota: usize,
    /// How many alignments survive each cycle as targets.
    pub target_quota: usize,
    /// Longest tolerated chain of extensions that explain no further data.
    pub max_unsupported_steps: usize,
    /// Hard stop on the number of cycles, if any.
    pub max_cycles: Option<usize>,
    /// Data symbols handed to the engine at a time (`None`: all at once).
    pub window: Option<usize>,
    /// Matching parameters shared by every broadcast.
    pub match_params: MatchParams,
    /// Weight given to data symbols when scoring (they are treated as
    /// this many times costlier than code symbols).
    pub cost_factor: f64,
    /// Round code sizes up to whole bits.
    pub integer_lengths: bool,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            driving_quota: 3,
            target_quota: 10,
            max_unsupported_steps: 10,
            max_cycles: None,
            window: None,
            match_params: MatchParams::default(),
            cost_factor: 2.0,
            integer_lengths: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("driving quota must not exceed target quota ({0} > {1})")]
    QuotaOrder(usize, usize),
    #[error("quotas must be at least 1")]
    ZeroQuota,
    #[error(transparent)]
    Coding(#[from] CodingError),
}

/// One surviving alignment with everything the selection steps need,
/// computed once.
#[derive(Clone, Debug)]
struct Candidate {
    alignment: MultipleAlignment,
    cd: f64,
    rows: usize,
    code: Vec<String>,
    key: String,
    hit_positions: BTreeSet<usize>,
    /// Length of the extension chain behind it that explained no new
    /// data symbols.
    unsupported: usize,
}

impl Candidate {
    fn build(
        mut alignment: MultipleAlignment,
        table: &CodeTable,
        unsupported: usize,
    ) -> Candidate {
        let cd = alignment.score_with(table).cd;
        let rows = alignment.rows().len();
        let code = alignment
            .derive_code()
            .iter()
            .map(|s| s.token.clone())
            .collect();
        let key = alignment.canonical_key();
        let hit_positions = alignment.hit_new_positions();
        Candidate {
            alignment,
            cd,
            rows,
            code,
            key,
            hit_positions,
            unsupported,
        }
    }
}

/// What a finished run returns.
#[derive(Debug)]
pub struct EngineResult {
    /// Surviving alignments, best first.
    pub alignments: Vec<MultipleAlignment>,
    /// The code table used for scoring.
    pub table: CodeTable,
    /// Cycles executed.
    pub cycles: usize,
    /// Legal alignments formed over the whole run, including those later
    /// purged by the quotas.
    pub formed: usize,
}

/// Runs the engine on one data pattern, deriving the code table from the
/// store and that pattern.
pub fn run(
    old: &PatternStore,
    new: &Pattern,
    cfg: &EngineConfig,
) -> Result<EngineResult, EngineError> {
    let news = [new.clone()].into_iter().collect();
    let mut table = CodeTable::derive(old, &news, cfg.cost_factor)?;
    if cfg.integer_lengths {
        table.set_integer_lengths(true);
    }
    run_with_table(old, new, &table, cfg)
}

/// Runs the engine with a caller-supplied code table (used when the table
/// must cover more than this one data pattern).
pub fn run_with_table(
    old: &PatternStore,
    new: &Pattern,
    table: &CodeTable,
    cfg: &EngineConfig,
) -> Result<EngineResult, EngineError> {
    if cfg.driving_quota == 0 || cfg.target_quota == 0 {
        return Err(EngineError::ZeroQuota);
    }
    if cfg.driving_quota > cfg.target_quota {
        return Err(EngineError::QuotaOrder(cfg.driving_quota, cfg.target_quota));
    }
    match cfg.window {
        None => run_stage(old, new, table, cfg, Vec::new()),
        Some(w) => run_windowed(old, new, table, cfg, w, &mut |_, _| {}),
    }
}

/// Windowed processing with a callback after every window. The callback
/// receives the window index and the alignments surviving so far.
pub fn run_windowed(
    old: &PatternStore,
    new: &Pattern,
    table: &CodeTable,
    cfg: &EngineConfig,
    window: usize,
    on_window: &mut dyn FnMut(usize, &[MultipleAlignment]),
) -> Result<EngineResult, EngineError> {
    let window = window.max(1);
    let symbols = new.symbols();
    let mut survivors: Vec<Candidate> = Vec::new();
    let mut cycles = 0;
    let mut formed = 0;
    let mut stage = 0;
    let mut upto = 0;
    while upto < symbols.len() {
        upto = (upto + window).min(symbols.len());
        let prefix = Pattern::from_symbols(symbols[..upto].to_vec(), new.frequency)
            .expect("prefix of a valid pattern");
        // Carry the previous survivors forward, their data row extended
        // with the fresh symbols as unmatched columns.
        let carried: Vec<Candidate> = survivors
            .iter()
            .map(|c| Candidate::build(c.alignment.rebase_data_row(&prefix), table, c.unsupported))
            .collect();
        let result = run_stage(old, &prefix, table, cfg, carried)?;
        cycles += result.cycles;
        formed += result.formed;
        survivors = result
            .alignments
            .into_iter()
            .map(|alignment| Candidate::build(alignment, table, 0))
            .collect();
        let view: Vec<MultipleAlignment> =
            survivors.iter().map(|c| c.alignment.clone()).collect();
        on_window(stage, &view);
        stage += 1;
    }
    Ok(EngineResult {
        alignments: survivors.into_iter().map(|c| c.alignment).collect(),
        table: table.clone(),
        cycles,
        formed,
    })
}

/// One full search over a fixed data pattern, optionally seeded with
/// alignments carried over from an earlier window.
fn run_stage(
    old: &PatternStore,
    new: &Pattern,
    table: &CodeTable,
    cfg: &EngineConfig,
    seed_candidates: Vec<Candidate>,
) -> Result<EngineResult, EngineError> {
    let old_patterns: Vec<&Pattern> = old.iter().collect();
    let mut store: Vec<Candidate> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for c in seed_candidates {
        if seen.insert(c.key.clone()) {
            store.push(c);
        }
    }

    let bare = MultipleAlignment::from_new(new);
    let mut cycles = 0;
    let mut formed = 0;
    // Hashes of every (base, target, hits) merge already attempted.
    let mut tried: HashSet<u64> = HashSet::new();

    // Two projections of the same data sequence must never cross-match
    // their data symbols at different positions — no legal alignment could
    // hold the result, so such hits are suppressed at the source.
    let mut data_ids: Vec<_> = new.symbols().iter().map(|s| s.id).collect();
    data_ids.sort_unstable();
    let match_params = MatchParams {
        segregate: Some(std::sync::Arc::new(data_ids)),
        stored_id_rule: true,
        ..cfg.match_params.clone()
    };

    // Driving set: indexes into `store`, or `None` for the bare data row.
    let mut driving: Vec<Option<usize>> = vec![None];
    driving.extend(select_quota(&store, cfg.driving_quota).into_iter().map(Some));

    loop {
        cycles += 1;
        // ── Assemble targets: stored patterns, then surviving alignments ──
        let alignment_projections: Vec<Pattern> =
            store.iter().map(|c| c.alignment.project()).collect();
        let mut target_seqs: Vec<&[crate::core::Symbol]> = old_patterns
            .iter()
            .map(|p| p.symbols())
            .collect();
        target_seqs.extend(alignment_projections.iter().map(|p| p.symbols()));

        // ── Broadcast each driving projection against every target ──────
        let driving_projections: Vec<(Option<usize>, Pattern)> = driving
            .iter()
            .map(|&d| match d {
                None => (None, bare.project()),
                Some(i) => (Some(i), store[i].alignment.project()),
            })
            .collect();
        let batches: Vec<(Option<usize>, Vec<crate::matcher::HitSequence>)> =
            driving_projections
                .par_iter()
                .map(|(d, proj)| {
                    (
                        *d,
                        broadcast_match(proj.symbols(), &target_seqs, &match_params),
                    )
                })
                .collect();

        // ── Select the merges worth attempting ──────────────────────────
        struct Attempt<'a> {
            base: &'a MultipleAlignment,
            base_unsupported: usize,
            base_hits: usize,
            tid: usize,
            hits: Vec<(usize, usize)>,
        }
        let mut attempts: Vec<Attempt> = Vec::new();
        for (d, sequences) in &batches {
            let (base, base_unsupported, base_hits) = match *d {
                None => (&bare, 0, 0),
                Some(i) => (
                    &store[i].alignment,
                    store[i].unsupported,
                    store[i].hit_positions.len(),
                ),
            };
            let base_key: &str = match *d {
                None => "",
                Some(i) => &store[i].key,
            };
            let mut per_target: BTreeMap<usize, usize> = BTreeMap::new();
            for seq in sequences {
                let tid = seq.target_id();
                // A surviving alignment must not be unified with itself.
                if let Some(i) = *d {
                    if tid >= old_patterns.len() && tid - old_patterns.len() == i {
                        continue;
                    }
                }
                // Sequences arrive best first; only the strongest few per
                // target are worth unifying.
                let tried_here = per_target.entry(tid).or_insert(0);
                if *tried_here >= SEQUENCES_PER_TARGET {
                    continue;
                }
                *tried_here += 1;
                let hits = seq.pairs();
                // The same merge attempted in an earlier cycle always ends
                // the same way; skip the repeat.
                let fingerprint = {
                    let mut h = DefaultHasher::new();
                    base_key.hash(&mut h);
                    if tid < old_patterns.len() {
                        ("p", old_patterns[tid].id).hash(&mut h);
                    } else {
                        ("a", &store[tid - old_patterns.len()].key).hash(&mut h);
                    }
                    hits.hash(&mut h);
                    h.finish()
                };
                if !tried.insert(fingerprint) {
                    continue;
                }
                attempts.push(Attempt {
                    base,
                    base_unsupported,
                    base_hits,
                    tid,
                    hits,
                });
            }
        }

        // ── Unify each selected merge into a new alignment ──────────────
        let built: Vec<Option<(Candidate, usize)>> = attempts
            .into_par_iter()
            .map(|at| {
                let target = if at.tid < old_patterns.len() {
                    ExtendTarget::Pattern(old_patterns[at.tid])
                } else {
                    ExtendTarget::Alignment(&store[at.tid - old_patterns.len()].alignment)
                };
                let mut hits = at.hits;
                let merged = loop {
                    match MultipleAlignment::extend(at.base, target, &hits) {
                        Ok(a) => break Some(a),
                        Err(Rejection::Malformed(_)) => break None,
                        Err(_) if hits.len() > 1 => {
                            // Retry without the most doubtful tail hit:
                            // a shorter prefix of the sequence may be
                            // perfectly legal.
                            hits.pop();
                        }
                        Err(_) => break None,
                    }
                };
                let alignment = merged?;
                let candidate = Candidate::build(alignment, table, 0);
                let unsupported = if candidate.hit_positions.len() > at.base_hits {
                    0
                } else {
                    at.base_unsupported + 1
                };
                if unsupported > cfg.max_unsupported_steps {
                    return None;
                }
                Some((candidate, unsupported))
            })
            .collect();
        let mut fresh: Vec<Candidate> = Vec::new();
        for (candidate, unsupported) in built.into_iter().flatten() {
            if !seen.insert(candidate.key.clone()) {
                continue;
            }
            fresh.push(Candidate {
                unsupported,
                ..candidate
            });
        }

        // ── Selection and termination ───────────────────────────────────
        let added = fresh.len();
        formed += added;
        store.extend(fresh);
        let keep = select_quota(&store, cfg.target_quota);
        store = reindex(store, &keep);
        if added == 0 {
            break;
        }
        if let Some(max) = cfg.max_cycles {
            if cycles >= max {
                break;
            }
        }
        driving = select_quota(&store, cfg.driving_quota)
            .into_iter()
            .map(Some)
            .collect();
    }

    store.sort_by(|a, b| rank_order(a, b));
    Ok(EngineResult {
        alignments: store.into_iter().map(|c| c.alignment).collect(),
        table: table.clone(),
        cycles,
        formed,
    })
}

/// Better-first ordering: higher compression difference, then fewer rows,
/// then the lexically smaller code.
fn rank_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    b.cd
        .partial_cmp(&a.cd)
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.rows.cmp(&b.rows))
        .then_with(|| a.code.cmp(&b.code))
        .then_with(|| a.key.cmp(&b.key))
}

/// The per-data-symbol quota: for every data position, the `quota` best
/// alignments that explain it are protected. Returns the protected
/// indexes, best first.
fn select_quota(store: &[Candidate], quota: usize) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..store.len()).collect();
    ranked.sort_by(|&a, &b| rank_order(&store[a], &store[b]));
    let mut protected: BTreeSet<usize> = BTreeSet::new();
    let mut positions: BTreeSet<usize> = BTreeSet::new();
    for c in store {
        positions.extend(c.hit_positions.iter().copied());
    }
    for &pos in &positions {
        let mut taken = 0;
        for &i in &ranked {
            if taken == quota {
                break;
            }
            if store[i].hit_positions.contains(&pos) {
                protected.insert(i);
                taken += 1;
            }
        }
    }
    ranked.retain(|i| protected.contains(i));
    ranked
}

/// Keeps only the candidates at `keep` (already ranked), preserving that
/// order.
fn reindex(store: Vec<Candidate>, keep: &[usize]) -> Vec<Candidate> {
    let mut taken: Vec<Option<Candidate>> = store.into_iter().map(Some).collect();
    keep.iter().map(|&i| taken[i].take().expect("unique index")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{make_pattern, Role};
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

    /// Parses a whitespace-separated pattern in which identification
    /// symbols carry a leading `!`; everything else is contents.
    fn marked(spec: &str, frequency: u64) -> Pattern {
        let spec: Vec<(String, Role)> = spec
            .split_whitespace()
            .map(|t| match t.strip_prefix('!') {
                Some(rest) => (rest.to_string(), Role::Id),
                None => (t.to_string(), Role::Content),
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

    #[test]
    fn single_symbol_retrieval_finds_every_explanation_once() {
        let store = association_store();
        let new = content("smoke", 1);
        let result = run(&store, &new, &EngineConfig::default()).unwrap();
        assert_eq!(result.alignments.len(), 5);
        let leads: Vec<String> = result
            .alignments
            .iter()
            .map(|a| a.rows()[1].symbols()[0].token.clone())
            .collect();
        assert_eq!(leads, vec!["tobacco", "heating", "fog", "dangerous", "stage"]);
        for a in &result.alignments {
            assert!(a.validate().is_ok());
            assert_eq!(a.rows().len(), 2);
        }
    }

    #[test]
    fn speculative_chains_stop_at_the_unsupported_cap() {
        // Each pattern is identified by its leading node number plus the
        // answer; the trailing number only *refers* to the children.
        let mut store = PatternStore::new();
        for tokens in [
            "!Start 43",
            "!43 !yes 44",
            "!43 !no 45",
            "!44 !yes 19",
            "!44 !no 51",
            "!45 !yes 46",
            "!45 !no 47",
            "!19 !yes 1",
            "!19 !no 20",
        ] {
            store.add(marked(tokens, 1));
        }
        let new = content("Start", 1);
        let cfg = EngineConfig {
            max_unsupported_steps: 2,
            ..EngineConfig::default()
        };
        let result = run(&store, &new, &cfg).unwrap();
        // One supported step, then exactly two speculative levels:
        // 1 + 2 + 4 alignments.
        assert_eq!(result.alignments.len(), 7);
        let best = &result.alignments[0];
        assert_eq!(best.rows().len(), 2);
        assert_eq!(best.rows()[1].symbols()[1].token, "43");
        let depth_counts: Vec<usize> = (2..=4)
            .map(|n| {
                result
                    .alignments
                    .iter()
                    .filter(|a| a.rows().len() == n)
                    .count()
            })
            .collect();
        assert_eq!(depth_counts, vec![1, 2, 4]);
    }

    /// A small grammar in the usual style: each pattern opens with an
    /// identification symbol (plus a discriminating digit for the word
    /// patterns) and closes with an identification symbol; everything a
    /// pattern *contains* — references to lower-level patterns, or raw
    /// letters — is contents.
    fn toy_grammar() -> PatternStore {
        let mut store = PatternStore::new();
        for (spec, f) in [
            ("!S NP #NP V #V NP #NP !#S", 500),
            ("!NP D #D N #N !#NP", 1000),
            ("!D !0 t h i s !#D", 600),
            ("!D !1 t h a t !#D", 400),
            ("!N !0 g i r l !#N", 300),
            ("!N !1 b o y !#N", 700),
            ("!V !0 l o v e s !#V", 650),
            ("!V !1 h a t e s !#V", 350),
        ] {
            store.add(marked(spec, f));
        }
        store
    }

    #[test]
    fn parsing_builds_the_full_hierarchy_and_its_code() {
        let store = toy_grammar();
        let new = content("t h i s b o y l o v e s t h a t g i r l", 1);
        // A twenty-symbol sentence spawns many partial analyses per cycle;
        // give the retained set room for them all.
        let cfg = EngineConfig {
            target_quota: 40,
            ..EngineConfig::default()
        };
        let result = run(&store, &new, &cfg).unwrap();
        assert!(!result.alignments.is_empty());
        let best = &result.alignments[0];
        // Every data symbol explained, full parse tree: sentence, two
        // noun phrases, five words.
        assert_eq!(best.hit_new_positions().len(), new.len());
        assert_eq!(best.rows().len(), 9);
        let code: Vec<String> = best
            .derive_code()
            .iter()
            .map(|s| s.token.clone())
            .collect();
        assert_eq!(code, vec!["S", "0", "1", "0", "1", "0", "#S"]);
    }

    /// Windowed processing discards all but the best survivors at each
    /// stage boundary, so it searches a smaller space than whole-pattern
    /// processing and is not guaranteed to land on the identical winner.
    /// What it must still deliver: a complete, legal parse of the whole
    /// sentence whose compression comes close to the unwindowed optimum,
    /// the right number of stages, and the same answer every time.
    #[test]
    fn windowed_processing_still_finds_a_near_optimal_full_parse() {
        let store = toy_grammar();
        let new = content("t h i s b o y l o v e s t h a t g i r l", 1);
        let cfg = EngineConfig {
            window: Some(6),
            target_quota: 40,
            ..EngineConfig::default()
        };
        let full = run(
            &store,
            &new,
            &EngineConfig {
                target_quota: 40,
                ..EngineConfig::default()
            },
        )
        .unwrap();
        let full_cd = full.alignments[0].score().unwrap().cd;

        let news = [new.clone()].into_iter().collect();
        let table = CodeTable::derive(&store, &news, cfg.cost_factor).unwrap();
        let mut stages = 0usize;
        let result = run_windowed(&store, &new, &table, &cfg, 6, &mut |_, view| {
            stages += 1;
            assert!(!view.is_empty());
        })
        .unwrap();
        // 20 data symbols in windows of 6: three full windows and a
        // final short one.
        assert_eq!(stages, 4);

        let best = &result.alignments[0];
        assert_eq!(best.hit_new_positions().len(), new.len());
        // The winner is a sentence-level analysis, not a fragment.
        assert!(best
            .rows()
            .iter()
            .any(|r| r.symbols().first().is_some_and(|s| s.token == "S")));
        let cd = best.score().unwrap().cd;
        assert!(
            cd > 0.9 * full_cd,
            "windowed cd {cd} too far below unwindowed {full_cd}"
        );

        // Stage boundaries must not introduce nondeterminism.
        let again = run(&store, &new, &cfg).unwrap();
        assert_eq!(
            again.alignments[0].canonical_key(),
            best.canonical_key()
        );
    }

    #[test]
    fn results_are_deterministic_across_runs() {
        let store = toy_grammar();
        let new = content("t h i s g i r l h a t e s t h a t b o y", 1);
        let run1 = run(&store, &new, &EngineConfig::default()).unwrap();
        let run2 = run(&store, &new, &EngineConfig::default()).unwrap();
        let keys = |r: &EngineResult| -> Vec<String> {
            r.alignments.iter().map(|a| a.canonical_key()).collect()
        };
        assert_eq!(keys(&run1), keys(&run2));
        let best = &run1.alignments[0];
        let code: Vec<String> = best
            .derive_code()
            .iter()
            .map(|s| s.token.clone())
            .collect();
        assert_eq!(code, vec!["S", "0", "0", "1", "1", "1", "#S"]);
    }

    #[test]
    fn scores_match_the_code_table_arithmetic() {
        let store = association_store();
        let new = content("smoke", 1);
        let result = run(&store, &new, &EngineConfig::default()).unwrap();
        let table = &result.table;
        let best = &result.alignments[0];
        let score = best.score().unwrap();
        assert_relative_eq!(
            score.b_n,
            table.bits("smoke") * 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(score.b_e, table.bits("tobacco"), max_relative = 1e-12);
    }
}

