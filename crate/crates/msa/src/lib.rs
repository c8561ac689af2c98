//! Information compression by multiple alignment, unification and search.
//!
//! This crate builds *multiple alignments*: arrangements of one incoming
//! data pattern (New) against any number of appearances of stored patterns
//! (Old), so that matching symbols line up in columns. Each alignment is
//! scored by how many bits it saves — the cost of the data symbols it
//! accounts for, minus the cost of the code needed to reconstruct them —
//! and a beam search grows good alignments out of smaller ones. On top of
//! that one mechanism sit parsing, pattern recognition, best-match
//! retrieval, several flavours of probabilistic reasoning, and the
//! induction of new grammars from raw data.
//!
//! Module map:
//!
//! - [`core`]: symbols, patterns, stores, and the matching rules.
//! - [`coding`]: frequencies, probabilities and code sizes.
//! - [`matcher`]: the probabilistic sequence matcher that finds hits.
//! - [`alignment`]: alignment construction, legality, scoring, rendering.
//! - [`search`]: the cyclic beam search that grows alignments.
//! - [`probability`]: absolute and relative probabilities of alignments,
//!   patterns and symbols.
//! - [`learn`]: grammar induction from a stream of data patterns.
//! - [`exhaustive`]: a brute-force alignment enumerator used as an oracle.

pub mod alignment;
pub mod coding;
pub mod core;
pub mod exhaustive;
pub mod learn;
pub mod matcher;
pub mod probability;
pub mod search;
