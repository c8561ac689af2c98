//! Atomic symbols, patterns, and the stores that hold them.
//!
//! A *symbol* is an indivisible token plus a role marker. Roles split each
//! pattern into *identification* symbols (`Id`), which name or delimit the
//! pattern, and *contents* symbols (`Content`), which carry its substance.
//! Only this two-way split has formal status; informal notions like
//! "boundary marker" or "class label" are conventions layered on top of it.
//!
//! A *pattern* is a non-empty ordered sequence of symbols with a frequency
//! of occurrence. Patterns live in two places: the repository of stored
//! knowledge ([`PatternStore`], "Old") and the stream of incoming data
//! ([`NewStream`], "New").
//!
//! Every symbol carries a session-unique instance id and a *derivation set*:
//! the instance ids of the original symbols it descends from. A fresh symbol
//! descends only from itself; a symbol produced by unifying a column of an
//! alignment descends from everything in that column. Two symbols may be
//! aligned only if their tokens are equal **and** their derivation sets are
//! disjoint, which bans aligning a symbol with itself (directly or through
//! any chain of unifications) while still allowing distinct copies of the
//! same pattern to align with each other.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Session-unique identity of one symbol occurrence.
pub type InstanceId = u64;

/// Session-unique identity of one pattern.
pub type PatternId = u64;

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);
static NEXT_PATTERN: AtomicU64 = AtomicU64::new(1);

fn next_instance_id() -> InstanceId {
    NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed)
}

fn next_pattern_id() -> PatternId {
    NEXT_PATTERN.fetch_add(1, Ordering::Relaxed)
}

/// The formal role of a symbol within its pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Identification symbol: names, delimits or discriminates the pattern.
    Id,
    /// Contents symbol: part of the substance the pattern describes.
    Content,
}

impl Role {
    pub fn is_id(self) -> bool {
        matches!(self, Role::Id)
    }
}

/// Which side of a guarded source/copy pair a symbol belongs to.
///
/// Used only during grammar induction, where a data pattern coexists with a
/// freshly stored copy of itself: the copy may supply context for *earlier*
/// data symbols but a data symbol must never re-match its own copy at the
/// same or a later position (that would let the data "explain" itself with
/// information it has not yet produced).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuardSide {
    Source,
    Copy,
}

/// Positional guard pairing a data pattern with its stored copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CopyGuard {
    /// Identifies one source/copy pairing.
    pub group: u64,
    /// Position of the symbol within its own sequence.
    pub pos: u32,
    /// Whether the symbol sits in the source data or in the stored copy.
    pub side: GuardSide,
}

/// One occurrence of a token, with role, identity and derivation.
#[derive(Clone, Debug, Serialize)]
pub struct Symbol {
    pub token: String,
    pub role: Role,
    /// Session-unique id of this occurrence.
    pub id: InstanceId,
    /// Sorted ids of the original occurrences this symbol descends from.
    derivation: Vec<InstanceId>,
    /// Set only on symbols taking part in guarded source/copy matching.
    pub guard: Option<CopyGuard>,
}

impl Symbol {
    /// A fresh symbol descending only from itself.
    pub fn new(token: impl Into<String>, role: Role) -> Symbol {
        let id = next_instance_id();
        Symbol {
            token: token.into(),
            role,
            id,
            derivation: vec![id],
            guard: None,
        }
    }

    pub fn derivation(&self) -> &[InstanceId] {
        &self.derivation
    }

    /// True when the two symbols may occupy the same alignment column:
    /// equal tokens (case-sensitive) and a sharable ancestry.
    pub fn matches(&self, other: &Symbol) -> bool {
        self.token == other.token && self.sharable_with(other)
    }

    /// The ancestry half of [`Symbol::matches`]: disjoint derivation sets
    /// (a symbol is never aligned with itself, even transitively), with
    /// the source/copy guard honoured when both sides carry one.
    pub fn sharable_with(&self, other: &Symbol) -> bool {
        if !disjoint_sorted(&self.derivation, &other.derivation) {
            return false;
        }
        if let (Some(a), Some(b)) = (self.guard, other.guard) {
            if a.group == b.group {
                match (a.side, b.side) {
                    // The copy may only support data symbols that come
                    // strictly after it in sequence.
                    (GuardSide::Source, GuardSide::Copy) => return b.pos < a.pos,
                    (GuardSide::Copy, GuardSide::Source) => return a.pos < b.pos,
                    _ => {}
                }
            }
        }
        true
    }

    /// The first ancestor of this symbol that appears in `sorted_ids`
    /// (which must be sorted ascending), if any.
    pub fn ancestor_in(&self, sorted_ids: &[InstanceId]) -> Option<InstanceId> {
        let (mut i, mut j) = (0, 0);
        while i < self.derivation.len() && j < sorted_ids.len() {
            match self.derivation[i].cmp(&sorted_ids[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return Some(self.derivation[i]),
            }
        }
        None
    }

    /// The symbol standing for a whole unified column: derivation sets are
    /// merged, and the role is `Id` if any contributor is `Id`.
    pub fn unify(&self, other: &Symbol) -> Symbol {
        debug_assert_eq!(self.token, other.token);
        let mut derivation = merge_sorted(&self.derivation, &other.derivation);
        derivation.dedup();
        let role = if self.role.is_id() || other.role.is_id() {
            Role::Id
        } else {
            Role::Content
        };
        // Source guards dominate so future copies still see the data
        // position they must stay behind.
        let guard = match (self.guard, other.guard) {
            (Some(g), _) if g.side == GuardSide::Source => Some(g),
            (_, Some(g)) if g.side == GuardSide::Source => Some(g),
            (g, h) => g.or(h),
        };
        Symbol {
            token: self.token.clone(),
            role,
            id: next_instance_id(),
            derivation,
            guard,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.token)
    }
}

/// True when two symbols may be aligned with each other.
///
/// The relation is symmetric, and irreflexive at the instance level: a
/// symbol never matches itself, nor any symbol that descends from a shared
/// original occurrence.
pub fn symbols_match(a: &Symbol, b: &Symbol) -> bool {
    a.matches(b)
}

fn disjoint_sorted(a: &[InstanceId], b: &[InstanceId]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return false,
        }
    }
    true
}

fn merge_sorted(a: &[InstanceId], b: &[InstanceId]) -> Vec<InstanceId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// A non-empty ordered sequence of symbols with a frequency of occurrence.
///
/// Patterns are immutable once constructed. A *copy* (fresh instance ids,
/// able to align with the original) is obtained with [`Pattern::copy_fresh`];
/// re-using the same `Pattern` value in several alignment rows models
/// repeated *appearances*, which share instance ids and therefore can never
/// be aligned with one another.
#[derive(Clone, Debug, Serialize)]
pub struct Pattern {
    pub id: PatternId,
    symbols: Vec<Symbol>,
    pub frequency: u64,
}

impl Pattern {
    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().map(|s| s.token.as_str())
    }

    /// A genuine copy: same tokens, roles and frequency, fresh instance ids.
    pub fn copy_fresh(&self) -> Pattern {
        let symbols = self
            .symbols
            .iter()
            .map(|s| {
                let mut fresh = Symbol::new(s.token.clone(), s.role);
                fresh.guard = s.guard;
                fresh
            })
            .collect();
        Pattern {
            id: next_pattern_id(),
            symbols,
            frequency: self.frequency,
        }
    }

    /// Builds a pattern from finished symbols (used by unification and
    /// grammar induction, which construct their symbols directly).
    pub fn from_symbols(symbols: Vec<Symbol>, frequency: u64) -> Result<Pattern, CoreError> {
        if symbols.is_empty() {
            return Err(CoreError::EmptyPattern);
        }
        if frequency == 0 {
            return Err(CoreError::ZeroFrequency);
        }
        for (index, sym) in symbols.iter().enumerate() {
            validate_token(&sym.token, index)?;
        }
        Ok(Pattern {
            id: next_pattern_id(),
            symbols,
            frequency,
        })
    }
}

/// Builds a pattern from `(token, role)` pairs, allocating fresh symbol
/// instances. Fails on an empty sequence, a zero frequency, or a malformed
/// token, naming the offending symbol index.
pub fn make_pattern<S: AsRef<str>>(
    tokens: &[(S, Role)],
    frequency: u64,
) -> Result<Pattern, CoreError> {
    if tokens.is_empty() {
        return Err(CoreError::EmptyPattern);
    }
    if frequency == 0 {
        return Err(CoreError::ZeroFrequency);
    }
    let mut symbols = Vec::with_capacity(tokens.len());
    for (index, (token, role)) in tokens.iter().enumerate() {
        let token = token.as_ref();
        validate_token(token, index)?;
        symbols.push(Symbol::new(token, *role));
    }
    Ok(Pattern {
        id: next_pattern_id(),
        symbols,
        frequency,
    })
}

fn validate_token(token: &str, index: usize) -> Result<(), CoreError> {
    if token.is_empty() {
        return Err(CoreError::EmptyToken { index });
    }
    if token.chars().any(char::is_whitespace) {
        return Err(CoreError::WhitespaceToken {
            index,
            token: token.to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("pattern has no symbols")]
    EmptyPattern,
    #[error("pattern frequency must be at least 1")]
    ZeroFrequency,
    #[error("symbol {index}: token is empty")]
    EmptyToken { index: usize },
    #[error("symbol {index}: token {token:?} contains whitespace")]
    WhitespaceToken { index: usize, token: String },
}

/// The repository of stored patterns ("Old"). Iteration follows insertion
/// order; pattern ids are unique within the store.
#[derive(Clone, Debug, Default)]
pub struct PatternStore {
    patterns: Vec<Pattern>,
    by_id: HashMap<PatternId, usize>,
}

impl PatternStore {
    pub fn new() -> PatternStore {
        PatternStore::default()
    }

    pub fn add(&mut self, pattern: Pattern) -> PatternId {
        let id = pattern.id;
        assert!(
            !self.by_id.contains_key(&id),
            "pattern id {id} already present in store"
        );
        self.by_id.insert(id, self.patterns.len());
        self.patterns.push(pattern);
        id
    }

    pub fn get(&self, id: PatternId) -> Option<&Pattern> {
        self.by_id.get(&id).map(|&i| &self.patterns[i])
    }

    /// Replaces a stored pattern in place, keeping its position.
    /// The replacement must carry the same id.
    pub fn replace(&mut self, pattern: Pattern) {
        let slot = self.by_id[&pattern.id];
        self.patterns[slot] = pattern;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pattern> {
        self.patterns.iter()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// The stream of incoming data patterns ("New"), in arrival order.
#[derive(Clone, Debug, Default)]
pub struct NewStream {
    patterns: Vec<Pattern>,
}

impl NewStream {
    pub fn new() -> NewStream {
        NewStream::default()
    }

    pub fn push(&mut self, pattern: Pattern) {
        self.patterns.push(pattern);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pattern> {
        self.patterns.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Pattern> {
        self.patterns.get(index)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

impl FromIterator<Pattern> for NewStream {
    fn from_iter<T: IntoIterator<Item = Pattern>>(iter: T) -> NewStream {
        NewStream {
            patterns: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym(token: &str) -> Symbol {
        Symbol::new(token, Role::Content)
    }

    #[test]
    fn make_pattern_validates_and_names_offending_index() {
        let err = make_pattern::<&str>(&[], 1).unwrap_err();
        assert_eq!(err, CoreError::EmptyPattern);

        let err = make_pattern(&[("a", Role::Id)], 0).unwrap_err();
        assert_eq!(err, CoreError::ZeroFrequency);

        let err = make_pattern(&[("a", Role::Id), ("", Role::Content)], 1).unwrap_err();
        assert_eq!(err, CoreError::EmptyToken { index: 1 });

        let err = make_pattern(&[("a", Role::Id), ("b c", Role::Content)], 1).unwrap_err();
        assert_eq!(
            err,
            CoreError::WhitespaceToken {
                index: 1,
                token: "b c".into()
            }
        );
        assert!(err.to_string().contains("symbol 1"));
    }

    #[test]
    fn matching_requires_equal_tokens_case_sensitively() {
        assert!(sym("fire").matches(&sym("fire")));
        assert!(!sym("fire").matches(&sym("Fire")));
        assert!(!sym("fire").matches(&sym("smoke")));
    }

    #[test]
    fn a_symbol_never_matches_itself() {
        let s = sym("a");
        assert!(!s.matches(&s));
        assert!(!s.matches(&s.clone()));
    }

    #[test]
    fn unified_symbols_inherit_the_ban() {
        let a = sym("a");
        let b = sym("a");
        let u = a.unify(&b);
        // The unified symbol descends from both parents, so it can match
        // neither of them, but a fresh occurrence is still fair game.
        assert!(!u.matches(&a));
        assert!(!u.matches(&b));
        assert!(u.matches(&sym("a")));
    }

    #[test]
    fn unification_prefers_id_role_and_merges_derivations() {
        let a = Symbol::new("x", Role::Id);
        let b = Symbol::new("x", Role::Content);
        let u = a.unify(&b);
        assert_eq!(u.role, Role::Id);
        assert_eq!(u.derivation(), &[a.id, b.id]);
    }

    #[test]
    fn copies_align_but_appearances_do_not() {
        let p = make_pattern(&[("a", Role::Content), ("b", Role::Content)], 1).unwrap();
        let copy = p.copy_fresh();
        // Copy: fresh instances, so the original may align with it.
        assert!(p.symbols()[0].matches(&copy.symbols()[0]));
        // Appearance: the same Pattern value shares instances with itself.
        assert!(!p.symbols()[0].matches(&p.clone().symbols()[0]));
    }

    #[test]
    fn copy_guard_is_directional_by_position() {
        let mut source = Symbol::new("n", Role::Content);
        source.guard = Some(CopyGuard {
            group: 7,
            pos: 6,
            side: GuardSide::Source,
        });
        let mut early_copy = Symbol::new("n", Role::Content);
        early_copy.guard = Some(CopyGuard {
            group: 7,
            pos: 3,
            side: GuardSide::Copy,
        });
        let mut late_copy = Symbol::new("n", Role::Content);
        late_copy.guard = Some(CopyGuard {
            group: 7,
            pos: 6,
            side: GuardSide::Copy,
        });
        // Earlier copy position: allowed, either way round.
        assert!(source.matches(&early_copy));
        assert!(early_copy.matches(&source));
        // Same or later copy position: banned.
        assert!(!source.matches(&late_copy));
        assert!(!late_copy.matches(&source));
        // A different pairing is unaffected.
        let mut other_group = Symbol::new("n", Role::Content);
        other_group.guard = Some(CopyGuard {
            group: 8,
            pos: 9,
            side: GuardSide::Copy,
        });
        assert!(source.matches(&other_group));
    }

    #[test]
    fn store_keeps_insertion_order() {
        let mut store = PatternStore::new();
        let a = make_pattern(&[("a", Role::Content)], 1).unwrap();
        let b = make_pattern(&[("b", Role::Content)], 2).unwrap();
        let (ida, idb) = (store.add(a), store.add(b));
        let order: Vec<PatternId> = store.iter().map(|p| p.id).collect();
        assert_eq!(order, vec![ida, idb]);
        assert_eq!(store.get(idb).unwrap().frequency, 2);
    }

    proptest! {
        #[test]
        fn matching_is_symmetric(ta in "[a-c]{1,3}", tb in "[a-c]{1,3}") {
            let a = sym(&ta);
            let b = sym(&tb);
            prop_assert_eq!(a.matches(&b), b.matches(&a));
        }

        #[test]
        fn matching_is_irreflexive(t in "[a-z]{1,5}") {
            let s = sym(&t);
            prop_assert!(!s.matches(&s));
        }

        #[test]
        fn unify_merges_sorted_disjoint(t in "[a-z]{1,3}") {
            let a = sym(&t);
            let b = sym(&t);
            let u = a.unify(&b);
            let d = u.derivation();
            prop_assert!(d.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(d.contains(&a.id) && d.contains(&b.id));
        }
    }
}
