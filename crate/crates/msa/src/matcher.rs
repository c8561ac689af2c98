//! Probabilistic sequence matching: finding hits between a driving pattern
//! and a set of target patterns.
//!
//! The matcher broadcasts the driving pattern's symbols left to right.
//! Every match against a target symbol (a *hit*) either extends existing
//! hit sequences or starts a new one; sequences are stored compactly as
//! paths in a tree whose dummy root anchors every first hit. The whole
//! process is `O(n * m)` in the lengths of the driving pattern and the
//! target material, and needs memory proportional to the retained paths
//! only.
//!
//! Each path carries a running significance score `p_n`: the probability
//! that a hit sequence at least this tight would occur between random
//! sequences over an alphabet of `A` types. With `p_1 = 1/A`, a hit
//! following gaps `g` (unmatched driving plus target symbols since the
//! previous hit) multiplies the path's score by `1 - (1 - p_1)^(g + 1)`.
//! Smaller values mean tighter, less probable, more significant sequences,
//! and rank first.
//!
//! When the number of live paths reaches the tree's capacity, the worst
//! half (highest `p_n`) is purged, so memory stays bounded while good
//! paths keep growing.

use std::collections::BTreeSet;

use crate::core::Symbol;

/// One match between a driving symbol and a target symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hit {
    pub driving_pos: usize,
    pub target_pos: usize,
    /// Index of the target pattern the hit lands in.
    pub target_id: usize,
}

/// A chain of hits in driving order, with its significance score.
#[derive(Clone, Debug)]
pub struct HitSequence {
    pub hits: Vec<Hit>,
    /// Probability of a chance match this tight; lower is better.
    pub p_n: f64,
}

impl HitSequence {
    /// The single target all hits land in, when the section rule held.
    pub fn target_id(&self) -> usize {
        self.hits[0].target_id
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// `(driving, target)` position pairs, for alignment construction.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.hits
            .iter()
            .map(|h| (h.driving_pos, h.target_pos))
            .collect()
    }
}

/// Tuning knobs for one matching run.
#[derive(Clone, Debug)]
pub struct MatchParams {
    /// Alphabet size `A` for the significance model; `None` derives it from
    /// the distinct tokens present in the session (minimum 2).
    pub alphabet: Option<usize>,
    /// Maximum number of live paths before a purge (minimum 2).
    pub capacity: usize,
    /// Largest tolerated gap between consecutive hits on the driving side.
    pub max_gap_driving: Option<usize>,
    /// Largest tolerated gap between consecutive hits on the target side.
    pub max_gap_target: Option<usize>,
    /// Restrict hits to pairs of one identification and one contents
    /// symbol (off by default: roles do not constrain matching).
    pub id_c_only: bool,
    /// Keep every path inside a single target pattern (the section rule).
    pub section_rule: bool,
    /// Sorted instance ids marking mutually exclusive origins: two symbols
    /// descending from *different* listed ids never hit each other. Used to
    /// stop two views of the same data sequence from cross-matching at
    /// different positions, which no legal alignment could keep.
    pub segregate: Option<std::sync::Arc<Vec<crate::core::InstanceId>>>,
    /// Skip hits pairing two identification symbols when neither descends
    /// from a `segregate` id — i.e. both are purely stored material. Such a
    /// pairing can never survive column legality checks, which allow one
    /// stored identification symbol per column.
    pub stored_id_rule: bool,
}

impl Default for MatchParams {
    fn default() -> MatchParams {
        MatchParams {
            alphabet: None,
            capacity: 10_000,
            max_gap_driving: None,
            max_gap_target: None,
            id_c_only: false,
            section_rule: true,
            segregate: None,
            stored_id_rule: false,
        }
    }
}

/// One step of the significance score: the previous score times the
/// probability of finding the next hit within `gap + 1` tries.
pub fn p_n_step(prev: f64, gap: usize, p_1: f64) -> f64 {
    prev * (1.0 - (1.0 - p_1).powi(gap as i32 + 1))
}

const ROOT: usize = 0;

#[derive(Clone, Debug)]
struct Node {
    hit: Hit,
    parent: usize,
    p_n: f64,
    children: usize,
    alive: bool,
    /// Insertion counter, for deterministic tie-breaking.
    seq: u64,
}

/// The tree of live hit sequences.
#[derive(Clone, Debug)]
pub struct HitTree {
    nodes: Vec<Node>,
    /// Live maximal paths, one per leaf.
    leaves: Vec<usize>,
    p_1: f64,
    capacity: usize,
    next_seq: u64,
}

impl HitTree {
    pub fn new(alphabet: usize, capacity: usize) -> HitTree {
        let alphabet = alphabet.max(2);
        let capacity = capacity.max(2);
        let root = Node {
            hit: Hit {
                driving_pos: usize::MAX,
                target_pos: usize::MAX,
                target_id: usize::MAX,
            },
            parent: ROOT,
            p_n: 1.0,
            children: 0,
            alive: true,
            seq: 0,
        };
        HitTree {
            nodes: vec![root],
            leaves: Vec::new(),
            p_1: 1.0 / alphabet as f64,
            capacity,
            next_seq: 1,
        }
    }

    pub fn p_1(&self) -> f64 {
        self.p_1
    }

    pub fn live_paths(&self) -> usize {
        self.leaves.len()
    }

    fn compatible(&self, node: usize, hit: Hit, params: &MatchParams) -> bool {
        let prev = &self.nodes[node].hit;
        if prev.driving_pos >= hit.driving_pos {
            return false;
        }
        if params.section_rule && prev.target_id != hit.target_id {
            return false;
        }
        if prev.target_id == hit.target_id && prev.target_pos >= hit.target_pos {
            return false;
        }
        if let Some(max) = params.max_gap_driving {
            if hit.driving_pos - prev.driving_pos - 1 > max {
                return false;
            }
        }
        if let Some(max) = params.max_gap_target {
            if prev.target_id == hit.target_id && hit.target_pos - prev.target_pos - 1 > max {
                return false;
            }
        }
        true
    }

    /// Adds one hit: it extends every live path at the deepest point that
    /// accepts it, or starts a new path from the root when none does.
    pub fn insert(&mut self, hit: Hit, params: &MatchParams) {
        let mut attach: BTreeSet<usize> = BTreeSet::new();
        if self.leaves.is_empty() {
            attach.insert(ROOT);
        }
        for leaf_slot in 0..self.leaves.len() {
            let mut node = self.leaves[leaf_slot];
            while node != ROOT && !self.compatible(node, hit, params) {
                node = self.nodes[node].parent;
            }
            attach.insert(node);
        }
        for parent in attach {
            let gap = if parent == ROOT {
                hit.driving_pos + hit.target_pos
            } else {
                let prev = &self.nodes[parent].hit;
                let target_gap = if prev.target_id == hit.target_id {
                    hit.target_pos - prev.target_pos - 1
                } else {
                    hit.target_pos
                };
                (hit.driving_pos - prev.driving_pos - 1) + target_gap
            };
            let p_n = p_n_step(self.nodes[parent].p_n, gap, self.p_1);
            let seq = self.next_seq;
            self.next_seq += 1;
            let index = self.nodes.len();
            self.nodes.push(Node {
                hit,
                parent,
                p_n,
                children: 0,
                alive: true,
                seq,
            });
            self.nodes[parent].children += 1;
            if parent != ROOT {
                // The parent's path is now strictly contained in the new
                // one; only maximal paths stay live.
                self.leaves.retain(|&l| l != parent);
            }
            self.leaves.push(index);
        }
        if self.leaves.len() >= self.capacity {
            self.purge();
        }
    }

    /// Discards the worst half of the live paths (never all of them).
    pub fn purge(&mut self) {
        let keyed: Vec<(f64, u64, usize)> = self
            .leaves
            .iter()
            .map(|&l| (self.nodes[l].p_n, self.nodes[l].seq, l))
            .collect();
        let victims = purge_victims(&keyed);
        for leaf in victims {
            self.leaves.retain(|&l| l != leaf);
            let mut node = leaf;
            // Drop the leaf, then any ancestors left childless: their own
            // paths were superseded when they gained children.
            loop {
                self.nodes[node].alive = false;
                let parent = self.nodes[node].parent;
                if parent == ROOT {
                    break;
                }
                self.nodes[parent].children -= 1;
                if self.nodes[parent].children > 0 || self.leaves.contains(&parent) {
                    break;
                }
                node = parent;
            }
        }
    }

    /// The live maximal hit sequences, best (lowest `p_n`) first. Ties
    /// prefer longer sequences, then the lexicographically smallest
    /// position list.
    pub fn sequences(&self) -> Vec<HitSequence> {
        let mut out: Vec<HitSequence> = self
            .leaves
            .iter()
            .map(|&leaf| {
                let mut hits = Vec::new();
                let mut node = leaf;
                while node != ROOT {
                    hits.push(self.nodes[node].hit);
                    node = self.nodes[node].parent;
                }
                hits.reverse();
                HitSequence {
                    hits,
                    p_n: self.nodes[leaf].p_n,
                }
            })
            .collect();
        out.sort_by(|a, b| {
            a.p_n
                .partial_cmp(&b.p_n)
                .unwrap()
                .then(b.hits.len().cmp(&a.hits.len()))
                .then_with(|| {
                    let ka: Vec<(usize, usize, usize)> = a
                        .hits
                        .iter()
                        .map(|h| (h.driving_pos, h.target_pos, h.target_id))
                        .collect();
                    let kb: Vec<(usize, usize, usize)> = b
                        .hits
                        .iter()
                        .map(|h| (h.driving_pos, h.target_pos, h.target_id))
                        .collect();
                    ka.cmp(&kb)
                })
        });
        out
    }
}

/// Picks the leaves to discard: the worst `ceil(n/2)` by score, newest
/// first among equals, but never the last survivor.
fn purge_victims(leaves: &[(f64, u64, usize)]) -> Vec<usize> {
    if leaves.len() < 2 {
        return Vec::new();
    }
    let mut order: Vec<&(f64, u64, usize)> = leaves.iter().collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.cmp(&a.1)));
    let doomed = leaves.len().div_ceil(2).min(leaves.len() - 1);
    order[..doomed].iter().map(|entry| entry.2).collect()
}

/// Matches one driving sequence against every target, returning the live
/// hit sequences ranked by significance.
pub fn broadcast_match(
    driving: &[Symbol],
    targets: &[&[Symbol]],
    params: &MatchParams,
) -> Vec<HitSequence> {
    let alphabet = params
        .alphabet
        .unwrap_or_else(|| session_alphabet(driving, targets));
    let origin = |s: &Symbol| {
        params
            .segregate
            .as_ref()
            .and_then(|ids| s.ancestor_in(ids))
    };
    let driving_origins: Vec<_> = driving.iter().map(origin).collect();
    let target_origins: Vec<Vec<_>> = targets
        .iter()
        .map(|t| t.iter().map(origin).collect())
        .collect();
    let mut tree = HitTree::new(alphabet, params.capacity);
    for (driving_pos, d) in driving.iter().enumerate() {
        for (target_id, target) in targets.iter().enumerate() {
            for (target_pos, t) in target.iter().enumerate() {
                if params.id_c_only && d.role == t.role {
                    continue;
                }
                let d_origin = driving_origins[driving_pos];
                let t_origin = target_origins[target_id][target_pos];
                if let (Some(a), Some(b)) = (d_origin, t_origin) {
                    if a != b {
                        continue;
                    }
                }
                if params.stored_id_rule
                    && d_origin.is_none()
                    && t_origin.is_none()
                    && d.role.is_id()
                    && t.role.is_id()
                {
                    continue;
                }
                if d.matches(t) {
                    tree.insert(
                        Hit {
                            driving_pos,
                            target_pos,
                            target_id,
                        },
                        params,
                    );
                }
            }
        }
    }
    tree.sequences()
}

/// Distinct tokens across the driving pattern and every target, floored
/// at 2 so the significance model stays defined.
pub fn session_alphabet(driving: &[Symbol], targets: &[&[Symbol]]) -> usize {
    let mut tokens: BTreeSet<&str> = driving.iter().map(|s| s.token.as_str()).collect();
    for target in targets {
        tokens.extend(target.iter().map(|s| s.token.as_str()));
    }
    tokens.len().max(2)
}
