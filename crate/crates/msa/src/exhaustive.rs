//! Brute-force enumeration of every alignment a store can support.
//!
//! The search engine explores the space of alignments with quotas, purging
//! and other economies; this module walks the whole space, for problems
//! small enough to afford it, and so provides ground truth the engine can
//! be checked against. Starting from the bare data pattern it repeatedly
//! tries every stored pattern against every alignment found so far,
//! unifying on every order-preserving set of symbol pairings, until
//! nothing new appears. Every result passes the same legality checks the
//! engine's own constructions do; the difference is purely that nothing is
//! ever discarded.
//!
//! Termination needs one concession: a pattern appearance can hook onto
//! cells contributed by earlier appearances of *other* patterns, so
//! without a cap on appearances per pattern the reachable set can be
//! infinite. The cap is part of [`OracleLimits`]; callers comparing
//! against the engine should pose problems whose best alignment stays
//! comfortably inside it.

use std::collections::{BTreeSet, VecDeque};

use crate::alignment::{ExtendTarget, MultipleAlignment};
use crate::coding::CodeTable;
use crate::core::{Pattern, PatternStore};

/// Size guards for exhaustive enumeration. Exceeding the first three is an
/// error before any work happens; the last two bound the walk itself.
#[derive(Clone, Debug)]
pub struct OracleLimits {
    /// Largest data pattern accepted.
    pub max_new_symbols: usize,
    /// Most stored patterns accepted.
    pub max_old_patterns: usize,
    /// Longest stored pattern accepted.
    pub max_old_symbols: usize,
    /// Most appearances of one stored pattern within a single alignment.
    pub max_appearances: usize,
    /// Hard ceiling on distinct alignments before giving up.
    pub max_alignments: usize,
}

impl Default for OracleLimits {
    fn default() -> OracleLimits {
        OracleLimits {
            max_new_symbols: 8,
            max_old_patterns: 4,
            max_old_symbols: 6,
            max_appearances: 2,
            max_alignments: 500_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("problem too large to enumerate exhaustively: {0}")]
    TooLarge(String),
    #[error("enumeration exceeded {0} distinct alignments")]
    Overflow(usize),
}

/// Enumerates every alignment reachable by adding stored-pattern
/// appearances to the data pattern, scored and sorted best first with the
/// same ordering the engine uses. The bare data-only alignment is not
/// included.
pub fn enumerate(
    store: &PatternStore,
    new: &Pattern,
    table: &CodeTable,
    limits: &OracleLimits,
) -> Result<Vec<MultipleAlignment>, OracleError> {
    if new.len() > limits.max_new_symbols {
        return Err(OracleError::TooLarge(format!(
            "data pattern has {} symbols (limit {})",
            new.len(),
            limits.max_new_symbols
        )));
    }
    if store.len() > limits.max_old_patterns {
        return Err(OracleError::TooLarge(format!(
            "store holds {} patterns (limit {})",
            store.len(),
            limits.max_old_patterns
        )));
    }
    for pattern in store.iter() {
        if pattern.len() > limits.max_old_symbols {
            return Err(OracleError::TooLarge(format!(
                "stored pattern has {} symbols (limit {})",
                pattern.len(),
                limits.max_old_symbols
            )));
        }
    }

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut out: Vec<MultipleAlignment> = Vec::new();
    let mut work: VecDeque<MultipleAlignment> = VecDeque::new();
    work.push_back(MultipleAlignment::from_new(new));

    while let Some(base) = work.pop_front() {
        let projection = base.project();
        for pattern in store.iter() {
            if base.appearances_of(pattern.id) >= limits.max_appearances {
                continue;
            }
            // Every symbol pairing that could ever sit in one column.
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            for (i, ps) in projection.symbols().iter().enumerate() {
                for (j, qs) in pattern.symbols().iter().enumerate() {
                    if ps.matches(qs) {
                        pairs.push((i, j));
                    }
                }
            }
            all_matchings(&pairs, 0, &mut Vec::new(), &mut |hits| {
                let Ok(mut grown) =
                    MultipleAlignment::extend(&base, ExtendTarget::Pattern(pattern), hits)
                else {
                    return Ok(());
                };
                if seen.insert(grown.canonical_key()) {
                    if out.len() >= limits.max_alignments {
                        return Err(OracleError::Overflow(limits.max_alignments));
                    }
                    grown.score_with(table);
                    out.push(grown.clone());
                    work.push_back(grown);
                }
                Ok(())
            })?;
        }
    }

    out.sort_by(better_first);
    Ok(out)
}

/// Calls `sink` once for every non-empty subset of `pairs` that ascends
/// strictly in both coordinates — i.e. every way of unifying the two
/// sequences without reordering either. `pairs` must be sorted.
fn all_matchings(
    pairs: &[(usize, usize)],
    from: usize,
    chosen: &mut Vec<(usize, usize)>,
    sink: &mut impl FnMut(&[(usize, usize)]) -> Result<(), OracleError>,
) -> Result<(), OracleError> {
    for k in from..pairs.len() {
        let (i, j) = pairs[k];
        if let Some(&(li, lj)) = chosen.last() {
            if i <= li || j <= lj {
                continue;
            }
        }
        chosen.push((i, j));
        sink(chosen)?;
        all_matchings(pairs, k + 1, chosen, sink)?;
        chosen.pop();
    }
    Ok(())
}

/// The engine's better-first ordering: more compression, then fewer rows,
/// then stable text tiebreaks.
fn better_first(a: &MultipleAlignment, b: &MultipleAlignment) -> std::cmp::Ordering {
    let cd = |x: &MultipleAlignment| x.score().map(|s| s.cd).unwrap_or(f64::NEG_INFINITY);
    let code = |x: &MultipleAlignment| {
        x.derive_code()
            .iter()
            .map(|s| s.token.clone())
            .collect::<Vec<_>>()
    };
    cd(b)
        .partial_cmp(&cd(a))
        .unwrap_or(std::cmp::Ordering::Equal)
        .then_with(|| a.rows().len().cmp(&b.rows().len()))
        .then_with(|| code(a).cmp(&code(b)))
        .then_with(|| a.canonical_key().cmp(&b.canonical_key()))
}

// ── tests ──────────────────────────────────────────────────────────────────
