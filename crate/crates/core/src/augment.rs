//! The auxiliary-node transformation of a rooted tree and the binary
//! junction topologies that realize it.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::RootedTopology;

/// Default cap on children per node for junction enumeration.
pub const JUNCTION_CAP: usize = 8;

/// The tree with every multi-child arc fan replaced by a clique of
/// auxiliary (Steiner) nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    /// Original nodes are `0..original_count`.
    pub original_count: usize,
    /// `aux_owner[i]` owns aux node `original_count + i`.
    pub aux_owner: Vec<usize>,
    pub arcs: Vec<(usize, usize)>,
    pub leaves: Vec<usize>,
}

impl AugmentedGraph {
    pub fn node_count(&self) -> usize {
        self.original_count + self.aux_owner.len()
    }

    pub fn is_aux(&self, v: usize) -> bool {
        v >= self.original_count
    }

    pub fn owner(&self, v: usize) -> Option<usize> {
        v.checked_sub(self.original_count).map(|i| self.aux_owner[i])
    }

    /// Aux nodes owned by `v`, in creation order.
    pub fn aux_of(&self, v: usize) -> Vec<usize> {
        self.aux_owner
            .iter()
            .enumerate()
            .filter(|&(_, &o)| o == v)
            .map(|(i, _)| self.original_count + i)
            .collect()
    }

    /// One arc per line, `"src dst"`.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.arcs {
            writeln!(out, "{a} {b}").unwrap();
        }
        out
    }
}

/// Build the augmented graph. Aux indices follow owner order, then creation order.
pub fn augment(topology: &RootedTopology) -> AugmentedGraph {
    let n = topology.node_count();
    let mut aux_owner = Vec::new();
    let mut arcs = Vec::new();
    for v in 0..n {
        let kids = topology.children(v);
        if kids.len() <= 1 {
            arcs.extend(kids.iter().map(|&c| (v, c)));
            continue;
        }
        let first = n + aux_owner.len();
        let aux: Vec<usize> = (first..first + kids.len() - 1).collect();
        aux_owner.extend(aux.iter().map(|_| v));
        arcs.extend(aux.iter().map(|&w| (v, w)));
        for &w in &aux {
            arcs.extend(kids.iter().map(|&c| (w, c)));
        }
        for &w in &aux {
            arcs.extend(aux.iter().filter(|&&u| u != w).map(|&u| (w, u)));
        }
    }
    AugmentedGraph {
        original_count: n,
        aux_owner,
        arcs,
        leaves: topology.leaves(),
    }
}

/// `(node count, arc count)` of the graph.
pub fn count_elements(g: &AugmentedGraph) -> (usize, usize) {
    (g.node_count(), g.arcs.len())
}

/// Slot of a junction tree: a child of the owning node (by position in its
/// child list) or an internal junction node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Leaf(usize),
    Junction(usize),
}

/// Rooted binary tree over `c` labeled leaves with `c - 1` junctions.
/// Junction 0 is the root, attached to the owning node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JunctionTopology {
    pub junctions: Vec<[Slot; 2]>,
}

impl JunctionTopology {
    pub fn leaf_count(&self) -> usize {
        self.junctions.len() + 1
    }

    /// Parenthesized form with sorted subtrees, identical for equal trees.
    pub fn canonical(&self) -> String {
        fn walk(t: &JunctionTopology, s: Slot) -> String {
            match s {
                Slot::Leaf(i) => i.to_string(),
                Slot::Junction(j) => {
                    let mut parts = [walk(t, t.junctions[j][0]), walk(t, t.junctions[j][1])];
                    parts.sort();
                    format!("({},{})", parts[0], parts[1])
                }
            }
        }
        walk(self, Slot::Junction(0))
    }

    /// Relabel junctions in preorder so the root is 0.
    fn normalized(nodes: &[[Slot; 2]], root: usize) -> JunctionTopology {
        let mut order = Vec::with_capacity(nodes.len());
        let mut stack = vec![root];
        while let Some(j) = stack.pop() {
            order.push(j);
            for s in nodes[j].iter().rev() {
                if let Slot::Junction(k) = *s {
                    stack.push(k);
                }
            }
        }
        let mut relabel = vec![0; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }
        let map = |s: Slot| match s {
            Slot::Junction(k) => Slot::Junction(relabel[k]),
            leaf => leaf,
        };
        JunctionTopology {
            junctions: order.iter().map(|&j| [map(nodes[j][0]), map(nodes[j][1])]).collect(),
        }
    }
}

/// All rooted binary trees over `c` labeled leaves, `(2c - 3)!!` of them.
pub fn junction_topologies(c: usize) -> Result<Vec<JunctionTopology>> {
    junction_topologies_capped(c, JUNCTION_CAP)
}

pub fn junction_topologies_capped(c: usize, cap: usize) -> Result<Vec<JunctionTopology>> {
    if c < 2 {
        return Err(Error::Input(format!("junctions need at least 2 children, got {c}")));
    }
    if c > cap {
        return Err(Error::Size(format!(
            "{c} children exceed the junction enumeration cap of {cap}"
        )));
    }
    // Trees as (junction list, root); leaf k is inserted on every edge,
    // including the edge above the root.
    let mut trees: Vec<(Vec<[Slot; 2]>, usize)> =
        vec![(vec![[Slot::Leaf(0), Slot::Leaf(1)]], 0)];
    for k in 2..c {
        let mut next = Vec::with_capacity(trees.len() * (2 * k - 1));
        for (nodes, root) in &trees {
            let fresh = nodes.len();
            // above the root
            let mut t = nodes.clone();
            t.push([Slot::Junction(*root), Slot::Leaf(k)]);
            next.push((t, fresh));
            // on the edge into each slot
            for j in 0..nodes.len() {
                for side in 0..2 {
                    let mut t = nodes.clone();
                    let below = t[j][side];
                    t.push([below, Slot::Leaf(k)]);
                    t[j][side] = Slot::Junction(fresh);
                    next.push((t, *root));
                }
            }
        }
        trees = next;
    }
    Ok(trees
        .iter()
        .map(|(nodes, root)| JunctionTopology::normalized(nodes, *root))
        .collect())
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn fig3() -> RootedTopology {
        RootedTopology::from_parents(&[0, 0, 0, 3, 3]).unwrap()
    }

    #[test]
    fn chain_is_unchanged() {
        let t = RootedTopology::from_parents(&[0, 1]).unwrap();
        let g = augment(&t);
        assert!(g.aux_owner.is_empty());
        assert_eq!(g.arcs, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn fig3_transformation() {
        let g = augment(&fig3());
        assert_eq!(g.aux_of(0), vec![6, 7]);
        assert_eq!(g.aux_of(3), vec![8]);
        let arcs: HashSet<_> = g.arcs.iter().copied().collect();
        let mut want: HashSet<(usize, usize)> =
            [(0, 6), (0, 7), (6, 7), (7, 6), (3, 8), (8, 4), (8, 5)].into_iter().collect();
        for k in [1, 2, 3] {
            want.insert((6, k));
            want.insert((7, k));
        }
        assert_eq!(arcs, want);
        assert_eq!(g.arcs.len(), 13);
        assert_eq!(count_elements(&g), (9, 13));
        assert_eq!(g.leaves, vec![1, 2, 4, 5]);
    }

    #[test]
    fn two_children_single_aux() {
        let g = augment(&RootedTopology::from_parents(&[0, 0]).unwrap());
        assert_eq!(g.arcs, vec![(0, 3), (3, 1), (3, 2)]);
    }

    #[test]
    fn closed_form_counts() {
        let chain = RootedTopology::from_parents(&[0, 1, 2, 3]).unwrap();
        assert_eq!(count_elements(&augment(&chain)), (5, 4));
        let star = RootedTopology::from_parents(&[0, 0, 0, 0]).unwrap();
        assert_eq!(count_elements(&augment(&star)), (8, 21));
    }

    #[test]
    fn aux_arcs_stay_in_family() {
        let g = augment(&fig3());
        let t = fig3();
        for &(a, b) in &g.arcs {
            if let Some(o) = g.owner(b) {
                assert!(a == o || g.owner(a) == Some(o));
            }
            if let Some(o) = g.owner(a) {
                assert!(g.owner(b) == Some(o) || t.parent(b) == Some(o));
            }
        }
    }

    #[test]
    fn edge_list_format() {
        let g = augment(&RootedTopology::from_parents(&[0, 0]).unwrap());
        assert_eq!(g.edge_list(), "0 3\n3 1\n3 2\n");
    }

    /// Independent count: a rooted binary tree on `c` leaves splits the leaf
    /// set at the root into two non-empty halves.
    fn count_by_split(c: usize) -> u64 {
        fn count(set: u32) -> u64 {
            if set.count_ones() == 1 {
                return 1;
            }
            let low = set & set.wrapping_neg();
            let mut total = 0;
            let rest = set ^ low;
            // halves containing the lowest element, excluding the full set
            let mut sub = rest;
            loop {
                let left = sub | low;
                if left != set {
                    total += count(left) * count(set ^ left);
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & rest;
            }
            total
        }
        count((1u32 << c) - 1)
    }

    #[test]
    fn junction_counts() {
        let double_factorial = |c: usize| (1..=(2 * c - 3)).step_by(2).product::<usize>();
        for c in 2..=6 {
            let all = junction_topologies(c).unwrap();
            assert_eq!(all.len(), double_factorial(c));
            assert_eq!(all.len() as u64, count_by_split(c));
            let distinct: HashSet<_> = all.iter().map(JunctionTopology::canonical).collect();
            assert_eq!(distinct.len(), all.len());
            for t in &all {
                assert_eq!(t.junctions.len(), c - 1);
                let mut leaves: Vec<_> = t
                    .junctions
                    .iter()
                    .flatten()
                    .filter_map(|s| match s {
                        Slot::Leaf(i) => Some(*i),
                        _ => None,
                    })
                    .collect();
                leaves.sort();
                assert_eq!(leaves, (0..c).collect::<Vec<_>>());
            }
        }
        assert_eq!(junction_topologies(2).unwrap().len(), 1);
        assert_eq!(junction_topologies(3).unwrap().len(), 3);
        assert_eq!(junction_topologies(4).unwrap().len(), 15);
    }

    #[test]
    fn junction_cap() {
        assert!(matches!(junction_topologies(9), Err(Error::Size(_))));
        assert!(matches!(junction_topologies(1), Err(Error::Input(_))));
    }
}
