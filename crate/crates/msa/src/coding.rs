//! Frequencies, probabilities and code sizes for symbol types.
//!
//! Compression scores rest on a [`CodeTable`]: for every symbol type the
//! table records its weighted frequency across the stored patterns and the
//! incoming data, the probability derived from it, and the length in bits of
//! a theoretically ideal code for it (the Shannon-Fano-Elias limit,
//! `-log2 p`). An optional integer mode rounds lengths up to whole bits as a
//! practical coder would (`ceil(log2 1/p) + 1`).
//!
//! Incoming data symbols are costed at a multiple of the table size — the
//! *cost factor* — reflecting that raw data is written out less efficiently
//! than the codes it is compressed into. A factor of about 2 suits analysis
//! of well-structured data; grammar induction uses a much larger factor so
//! that removing redundancy from the data dominates the cost of new codes.

use indexmap::IndexMap;
use std::collections::HashMap;

use crate::core::{NewStream, PatternStore};

/// Frequency, probability and ideal code length of one symbol type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodeEntry {
    /// Sum over patterns of `frequency x occurrences` for this type.
    pub frequency: f64,
    /// `frequency / total_mass`.
    pub probability: f64,
    /// Code length in bits.
    pub bits: f64,
}

/// Code sizes for every symbol type in a session.
#[derive(Clone, Debug)]
pub struct CodeTable {
    entries: IndexMap<String, CodeEntry>,
    /// Multiplier applied when costing incoming data symbols.
    pub cost_factor: f64,
    /// Sum of all weighted frequencies.
    pub total_mass: f64,
    /// Whether lengths are rounded up to whole bits.
    pub integer_lengths: bool,
    /// Fixed provisional sizes for types the table should not re-derive
    /// (freshly invented identification symbols during induction).
    overrides: HashMap<String, f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CodingError {
    #[error("cost factor must be at least 1 (got {0})")]
    CostFactor(f64),
    #[error("cannot derive a code table from empty stores")]
    EmptyUniverse,
}

impl CodeTable {
    /// Derives the table from the stored patterns plus the incoming data,
    /// every pattern weighted by its own frequency.
    pub fn derive(
        old: &PatternStore,
        new: &NewStream,
        cost_factor: f64,
    ) -> Result<CodeTable, CodingError> {
        if cost_factor < 1.0 {
            return Err(CodingError::CostFactor(cost_factor));
        }
        let mut counts: IndexMap<String, f64> = IndexMap::new();
        let mut bump = |token: &str, weight: f64| {
            *counts.entry(token.to_string()).or_insert(0.0) += weight;
        };
        for pattern in old.iter() {
            for token in pattern.tokens() {
                bump(token, pattern.frequency as f64);
            }
        }
        for pattern in new.iter() {
            for token in pattern.tokens() {
                bump(token, pattern.frequency as f64);
            }
        }
        let total_mass: f64 = counts.values().sum();
        if total_mass <= 0.0 {
            return Err(CodingError::EmptyUniverse);
        }
        let mut table = CodeTable {
            entries: IndexMap::new(),
            cost_factor,
            total_mass,
            integer_lengths: false,
            overrides: HashMap::new(),
        };
        for (token, frequency) in counts {
            let probability = frequency / total_mass;
            let entry = CodeEntry {
                frequency,
                probability,
                bits: table.length_for(probability),
            };
            table.entries.insert(token, entry);
        }
        Ok(table)
    }

    /// Builds a table directly from per-type frequencies (grammar induction
    /// recomputes sizes from alignment-supported counts).
    pub fn from_frequencies(
        counts: impl IntoIterator<Item = (String, f64)>,
        cost_factor: f64,
    ) -> Result<CodeTable, CodingError> {
        if cost_factor < 1.0 {
            return Err(CodingError::CostFactor(cost_factor));
        }
        let counts: IndexMap<String, f64> =
            counts.into_iter().filter(|(_, f)| *f > 0.0).collect();
        let total_mass: f64 = counts.values().sum();
        if total_mass <= 0.0 {
            return Err(CodingError::EmptyUniverse);
        }
        let mut table = CodeTable {
            entries: IndexMap::new(),
            cost_factor,
            total_mass,
            integer_lengths: false,
            overrides: HashMap::new(),
        };
        for (token, frequency) in counts {
            let probability = frequency / total_mass;
            let entry = CodeEntry {
                frequency,
                probability,
                bits: table.length_for(probability),
            };
            table.entries.insert(token, entry);
        }
        Ok(table)
    }

    fn length_for(&self, probability: f64) -> f64 {
        if self.integer_lengths {
            (1.0 / probability).log2().ceil() + 1.0
        } else {
            -probability.log2()
        }
    }

    /// Switches between real-valued ideal lengths and whole-bit lengths,
    /// recomputing every entry.
    pub fn set_integer_lengths(&mut self, on: bool) {
        if self.integer_lengths == on {
            return;
        }
        self.integer_lengths = on;
        let probabilities: Vec<(String, f64)> = self
            .entries
            .iter()
            .map(|(t, e)| (t.clone(), e.probability))
            .collect();
        for (token, p) in probabilities {
            let bits = self.length_for(p);
            self.entries.get_mut(&token).unwrap().bits = bits;
        }
    }

    /// Pins a provisional size for a type, shadowing any derived entry.
    pub fn set_override(&mut self, token: impl Into<String>, bits: f64) {
        self.overrides.insert(token.into(), bits);
    }

    /// Code length in bits for a type. Types absent from the table are
    /// costed as one-off observations (notional frequency 1).
    pub fn bits(&self, token: &str) -> f64 {
        if let Some(&bits) = self.overrides.get(token) {
            return bits;
        }
        if let Some(entry) = self.entries.get(token) {
            return entry.bits;
        }
        self.length_for(1.0 / self.total_mass)
    }

    /// Cost of one incoming data symbol: table size times the cost factor.
    pub fn new_symbol_bits(&self, token: &str) -> f64 {
        self.bits(token) * self.cost_factor
    }

    pub fn probability(&self, token: &str) -> Option<f64> {
        self.entries.get(token).map(|e| e.probability)
    }

    pub fn entry(&self, token: &str) -> Option<&CodeEntry> {
        self.entries.get(token)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &CodeEntry)> {
        self.entries.iter().map(|(t, e)| (t.as_str(), e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lower bound on the compression available from repeated sequences: for
/// each `(frequency, size)` item, a sequence of `size` symbols occurring
/// `frequency` times can save `(frequency - 1) * size` symbols by being
/// stored once and referenced thereafter.
pub fn redundancy_estimate(items: &[(u64, u64)]) -> u64 {
    items
        .iter()
        .map(|&(frequency, size)| frequency.saturating_sub(1) * size)
        .sum()
}

/// How big the space of possible unifications is for a sequence of `n`
/// symbols: the number of non-empty subsequences, and the number of
/// unordered comparisons between two distinct subsequences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchSpaceStats {
    pub symbols: u32,
    /// `2^n - 1` non-empty subsequences.
    pub subsequences: f64,
    /// `P * (P - 1) / 2` pairwise comparisons.
    pub comparisons: f64,
}

pub fn search_space_stats(n: u32) -> SearchSpaceStats {
    let subsequences = 2f64.powi(n as i32) - 1.0;
    let comparisons = subsequences * (subsequences - 1.0) / 2.0;
    SearchSpaceStats {
        symbols: n,
        subsequences,
        comparisons,
    }
}
