//! Exact discrete-domain solving on a routing graph.
//!
//! Each parent-children family is routed by its own connected subgraph
//! joining the parent's graph node to its children's; an edge used by two
//! families is paid by both. For fixed positions a family's cheapest route
//! is a graph Steiner tree, so the whole problem is a tree DP whose
//! per-family step is a Dreyfus-Wagner recursion seeded with the children's
//! subtree costs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::grid::{CandidateSets, FixingMasks, GeoGraph};
use crate::model::{Instance, Point, Segment, Solution, SolveStats, Status};

/// Default cap on Dreyfus-Wagner terminals (children per family).
pub const DW_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPaths {
    /// `f64::INFINITY` for unreachable nodes.
    pub dist: Vec<f64>,
    /// Predecessor node and edge on a shortest path.
    pub pred: Vec<Option<(usize, usize)>>,
}

#[derive(Copy, Clone, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Relax `dist` in place from every finite entry, over `mask`ed edges.
/// Returns the improving predecessor per node.
fn relax(g: &GeoGraph, dist: &mut [f64], mask: Option<&[bool]>) -> Vec<Option<(usize, usize)>> {
    let mut pred = vec![None; dist.len()];
    let mut heap: BinaryHeap<Entry> = dist
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(i, &d)| Entry(d, i))
        .collect();
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(w, e) in g.neighbors(u) {
            if mask.is_some_and(|m| !m[e]) {
                continue;
            }
            let nd = d + g.edges[e].weight;
            if nd < dist[w] {
                dist[w] = nd;
                pred[w] = Some((u, e));
                heap.push(Entry(nd, w));
            }
        }
    }
    pred
}

/// The part of a graph a family may route through, renumbered densely.
struct Sub {
    /// Graph node of each local node.
    nodes: Vec<usize>,
    /// Local index of each graph node, `usize::MAX` when absent.
    local: Vec<usize>,
    /// Local neighbor, graph edge, weight.
    adj: Vec<Vec<(usize, usize, f64)>>,
}

impl Sub {
    /// Endpoints of allowed edges plus every node carrying a finite seed.
    fn new(g: &GeoGraph, seeds: &[Vec<f64>], mask: Option<&[bool]>) -> Sub {
        let n = g.node_count();
        let mut local = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        let mut take = |u: usize, local: &mut Vec<usize>| {
            if local[u] == usize::MAX {
                local[u] = nodes.len();
                nodes.push(u);
            }
        };
        for (i, e) in g.edges.iter().enumerate() {
            if mask.is_none_or(|m| m[i]) {
                take(e.a, &mut local);
                take(e.b, &mut local);
            }
        }
        for s in seeds {
            for (u, d) in s.iter().enumerate() {
                if d.is_finite() {
                    take(u, &mut local);
                }
            }
        }
        let mut adj = vec![Vec::new(); nodes.len()];
        for (i, e) in g.edges.iter().enumerate() {
            if mask.is_none_or(|m| m[i]) {
                let (a, b) = (local[e.a], local[e.b]);
                adj[a].push((b, i, e.weight));
                adj[b].push((a, i, e.weight));
            }
        }
        Sub { nodes, local, adj }
    }

    /// Dijkstra from every finite entry; records steps into `back`.
    fn relax(&self, dist: &mut [f64], back: &mut [Back], heap: &mut BinaryHeap<Entry>) {
        heap.clear();
        heap.extend(dist.iter().enumerate().filter(|(_, d)| d.is_finite()).map(|(i, &d)| Entry(d, i)));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(w, e, wt) in &self.adj[u] {
                let nd = d + wt;
                if nd < dist[w] {
                    dist[w] = nd;
                    back[w] = Back::Step(u, e);
                    heap.push(Entry(nd, w));
                }
            }
        }
    }
}

pub fn dijkstra(g: &GeoGraph, source: usize) -> ShortestPaths {
    dijkstra_masked(g, source, None)
}

pub fn dijkstra_masked(g: &GeoGraph, source: usize, mask: Option<&[bool]>) -> ShortestPaths {
    let mut dist = vec![f64::INFINITY; g.node_count()];
    dist[source] = 0.0;
    let pred = relax(g, &mut dist, mask);
    ShortestPaths { dist, pred }
}

/// Set of graph edges with its total weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeUnion {
    pub edges: BTreeSet<usize>,
    pub weight: f64,
}

impl EdgeUnion {
    fn from_edges(g: &GeoGraph, edges: BTreeSet<usize>) -> Self {
        let weight = edges.iter().map(|&e| g.edges[e].weight).sum();
        EdgeUnion { edges, weight }
    }
}

#[derive(Clone, Copy, Debug)]
enum Back {
    /// Terminal `i` sits here.
    Seed(usize),
    /// Union of the subsets `t` and `s \ t` at the same node.
    Merge(u32),
    /// Extended from a neighbor over an edge.
    Step(usize, usize),
    None,
}

/// Dreyfus-Wagner table: `cost[s][u]` is the cheapest tree containing `u`
/// that joins the terminals in `s`, each charged its seed cost. Indexed by
/// local node of `sub`.
struct Table {
    sub: Sub,
    cost: Vec<Vec<f64>>,
    back: Vec<Vec<Back>>,
}

fn dreyfus_wagner(g: &GeoGraph, seeds: &[Vec<f64>], mask: Option<&[bool]>) -> Table {
    let sub = Sub::new(g, seeds, mask);
    let k = seeds.len();
    let n = sub.nodes.len();
    let full = (1usize << k) - 1;
    let mut cost = vec![Vec::new(); full + 1];
    let mut back = vec![Vec::new(); full + 1];
    let mut heap = BinaryHeap::new();
    for s in 1..=full {
        let mut c = vec![f64::INFINITY; n];
        let mut b = vec![Back::None; n];
        if s.count_ones() == 1 {
            let i = s.trailing_zeros() as usize;
            for (u, &gu) in sub.nodes.iter().enumerate() {
                if seeds[i][gu] < c[u] {
                    c[u] = seeds[i][gu];
                    b[u] = Back::Seed(i);
                }
            }
        } else {
            // split off subsets containing the lowest terminal
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            let mut part = (rest - 1) & rest;
            loop {
                let t = part | low;
                let (a, z) = (&cost[t], &cost[s ^ t]);
                for u in 0..n {
                    let v = a[u] + z[u];
                    if v < c[u] {
                        c[u] = v;
                        b[u] = Back::Merge(t as u32);
                    }
                }
                if part == 0 {
                    break;
                }
                part = (part - 1) & rest;
            }
        }
        sub.relax(&mut c, &mut b, &mut heap);
        cost[s] = c;
        back[s] = b;
    }
    Table { sub, cost, back }
}

impl Table {
    /// Cost at graph node `u`; infinite outside the subgraph.
    fn at(&self, s: usize, u: usize) -> f64 {
        match self.sub.local[u] {
            usize::MAX => f64::INFINITY,
            l => self.cost[s][l],
        }
    }

    /// Edges of the tree behind `cost[s][u]` for graph node `u`, and the
    /// graph node where each seed landed.
    fn unwind(&self, s: usize, u: usize, edges: &mut BTreeSet<usize>, seeds: &mut Vec<(usize, usize)>) {
        let mut stack = vec![(s, self.sub.local[u])];
        while let Some((s, u)) = stack.pop() {
            match self.back[s][u] {
                Back::Seed(i) => seeds.push((i, self.sub.nodes[u])),
                Back::Merge(t) => {
                    stack.push((t as usize, u));
                    stack.push((s ^ t as usize, u));
                }
                Back::Step(p, e) => {
                    edges.insert(e);
                    stack.push((s, p));
                }
                Back::None => unreachable!("finite entry without a witness"),
            }
        }
    }
}

/// Minimum-weight connected subgraph spanning `terminals`.
pub fn steiner_tree_dw(g: &GeoGraph, terminals: &[usize]) -> Result<EdgeUnion> {
    steiner_tree_dw_capped(g, terminals, DW_CAP)
}

pub fn steiner_tree_dw_capped(g: &GeoGraph, terminals: &[usize], cap: usize) -> Result<EdgeUnion> {
    let terms: Vec<usize> = terminals.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if terms.len() > cap {
        return Err(Error::Size(format!(
            "{} terminals exceed the Steiner cap of {cap}; export the MILP instead",
            terms.len()
        )));
    }
    if let Some(&t) = terms.iter().find(|&&t| t >= g.node_count()) {
        return Err(Error::Input(format!("terminal {t} is not a graph node")));
    }
    if terms.len() <= 1 {
        return Ok(EdgeUnion::default());
    }
    // root the tree at the last terminal, seed the others
    let (&root, others) = terms.split_last().unwrap();
    let seeds: Vec<Vec<f64>> = others
        .iter()
        .map(|&t| {
            let mut s = vec![f64::INFINITY; g.node_count()];
            s[t] = 0.0;
            s
        })
        .collect();
    let table = dreyfus_wagner(g, &seeds, None);
    let full = (1 << others.len()) - 1;
    if !table.at(full, root).is_finite() {
        return Err(Error::Infeasible("terminals are not connected".into()));
    }
    let mut edges = BTreeSet::new();
    table.unwind(full, root, &mut edges, &mut Vec::new());
    Ok(EdgeUnion::from_edges(g, edges))
}

#[derive(Debug, Clone, Copy)]
pub struct DiscreteOptions {
    /// Cap on children per family for the Dreyfus-Wagner step.
    pub max_children: usize,
}

impl Default for DiscreteOptions {
    fn default() -> Self {
        DiscreteOptions { max_children: DW_CAP }
    }
}

/// Embedding plus the routed edges of every family.
fn assemble(
    inst: &Instance,
    g: &GeoGraph,
    assignment: Vec<usize>,
    family_edges: BTreeMap<usize, BTreeSet<usize>>,
    stats: SolveStats,
) -> Solution {
    let positions: BTreeMap<usize, Point> =
        assignment.iter().enumerate().map(|(v, &i)| (v, g.nodes[i].clone())).collect();
    let mut edges = Vec::new();
    for set in family_edges.values() {
        for &e in set {
            let ge = &g.edges[e];
            edges.push(Segment {
                from: g.nodes[ge.a].clone(),
                to: g.nodes[ge.b].clone(),
                length: ge.weight,
                nodes: None,
            });
        }
    }
    debug_assert_eq!(assignment.len(), inst.node_count());
    let total: f64 = edges.iter().map(|s| s.length).sum();
    Solution {
        positions,
        edges,
        total_length: total,
        status: Status::Exact,
        lower_bound: total,
        assignment: Some(assignment),
        stats,
    }
}

/// Exact discrete optimum. `masks` restricts each family to its allowed edges.
pub fn solve_discrete(
    inst: &Instance,
    g: &GeoGraph,
    cands: &CandidateSets,
    masks: Option<&FixingMasks>,
    opts: &DiscreteOptions,
) -> Result<Solution> {
    let sol = solve_tree_dp(inst, g, cands, masks, opts)?;
    if sol.status == Status::Infeasible && masks.is_some() {
        // masks never remove the optimum on a full lattice; elsewhere fall back
        return solve_tree_dp(inst, g, cands, None, opts);
    }
    Ok(sol)
}

fn solve_tree_dp(
    inst: &Instance,
    g: &GeoGraph,
    cands: &CandidateSets,
    masks: Option<&FixingMasks>,
    opts: &DiscreteOptions,
) -> Result<Solution> {
    let topo = &inst.topology;
    let n = inst.node_count();
    let gn = g.node_count();
    if cands.sets.len() != n {
        return Err(Error::Input(format!("{} candidate sets for {n} tree nodes", cands.sets.len())));
    }
    for v in 0..n {
        let k = topo.children(v).len();
        if k > opts.max_children {
            return Err(Error::Size(format!(
                "node {v} has {k} children, above the cap of {}; export the MILP instead",
                opts.max_children
            )));
        }
        if cands.of(v).is_empty() {
            return Err(Error::Infeasible(format!("node {v} has no candidate graph node")));
        }
    }
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut tables: Vec<Option<Table>> = (0..n).map(|_| None).collect();
    let mut stats = SolveStats::default();
    for &v in topo.preorder().iter().rev() {
        let mut here = vec![f64::INFINITY; gn];
        let kids = topo.children(v);
        if kids.is_empty() {
            for &u in cands.of(v) {
                here[u] = 0.0;
            }
        } else {
            let mask = masks.and_then(|m| m.mask(v));
            let seeds: Vec<Vec<f64>> = kids.iter().map(|&c| best[c].clone()).collect();
            let table = dreyfus_wagner(g, &seeds, mask);
            stats.search_nodes += ((1u64 << kids.len()) - 1) * table.sub.nodes.len() as u64;
            let full = (1 << kids.len()) - 1;
            for &u in cands.of(v) {
                here[u] = table.at(full, u);
            }
            tables[v] = Some(table);
        }
        best[v] = here;
    }
    let root = cands
        .of(0)
        .iter()
        .copied()
        .min_by(|&a, &b| best[0][a].total_cmp(&best[0][b]).then(a.cmp(&b)))
        .expect("root has candidates");
    if !best[0][root].is_finite() {
        return Ok(Solution::infeasible(f64::INFINITY));
    }
    stats.leaves = 1;

    let mut assignment = vec![usize::MAX; n];
    assignment[0] = root;
    let mut family_edges = BTreeMap::new();
    for v in topo.preorder() {
        let Some(table) = &tables[v] else { continue };
        let kids = topo.children(v);
        let mut edges = BTreeSet::new();
        let mut landed = Vec::new();
        table.unwind((1 << kids.len()) - 1, assignment[v], &mut edges, &mut landed);
        for (i, u) in landed {
            assignment[kids[i]] = u;
        }
        family_edges.insert(v, edges);
    }
    Ok(assemble(inst, g, assignment, family_edges, stats))
}

/// Ground truth by enumeration: every edge subset, every assignment.
/// Limited to 20 edges and 10^4 assignments.
pub fn brute_force_oracle(inst: &Instance, g: &GeoGraph, cands: &CandidateSets) -> Result<Solution> {
    brute_force_oracle_masked(inst, g, cands, None)
}

pub fn brute_force_oracle_masked(
    inst: &Instance,
    g: &GeoGraph,
    cands: &CandidateSets,
    masks: Option<&FixingMasks>,
) -> Result<Solution> {
    let m = g.edge_count();
    if m > 20 {
        return Err(Error::Size(format!("oracle enumerates edge subsets; {m} edges exceed 20")));
    }
    if cands.product() > 1e4 {
        return Err(Error::Size(format!("{} assignments exceed 10^4", cands.product())));
    }
    let topo = &inst.topology;
    let families = topo.internal_nodes();

    // cheapest subset per family and terminal tuple (parent, children...)
    let mut cheapest: Vec<BTreeMap<Vec<usize>, (f64, u32)>> = Vec::new();
    for &v in &families {
        let members: Vec<usize> = std::iter::once(v).chain(topo.children(v).iter().copied()).collect();
        let tuples = tuples_of(&members, cands);
        let mut table: BTreeMap<Vec<usize>, (f64, u32)> = BTreeMap::new();
        let allowed = masks.and_then(|mk| mk.mask(v));
        for subset in 0u32..(1 << m) {
            if let Some(a) = allowed {
                if (0..m).any(|e| subset >> e & 1 == 1 && !a[e]) {
                    continue;
                }
            }
            let label = subset_components(g, subset);
            let weight: f64 = (0..m).filter(|&e| subset >> e & 1 == 1).map(|e| g.edges[e].weight).sum();
            for t in &tuples {
                if t.iter().all(|&u| label[u] == label[t[0]]) {
                    let entry = table.entry(t.clone()).or_insert((f64::INFINITY, 0));
                    if weight < entry.0 {
                        *entry = (weight, subset);
                    }
                }
            }
        }
        cheapest.push(table);
    }

    let all: Vec<usize> = (0..inst.node_count()).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    // lexicographic order; strict improvement keeps the smallest tie
    for assignment in tuples_of(&all, cands) {
        let mut total = 0.0;
        for (f, &v) in families.iter().enumerate() {
            let key: Vec<usize> = std::iter::once(v)
                .chain(topo.children(v).iter().copied())
                .map(|u| assignment[u])
                .collect();
            total += cheapest[f].get(&key).map_or(f64::INFINITY, |x| x.0);
        }
        if total.is_finite() && best.as_ref().is_none_or(|b| total < b.0) {
            best = Some((total, assignment));
        }
    }
    let Some((_, assignment)) = best else {
        return Ok(Solution::infeasible(f64::INFINITY));
    };
    let mut family_edges = BTreeMap::new();
    for (f, &v) in families.iter().enumerate() {
        let key: Vec<usize> = std::iter::once(v)
            .chain(topo.children(v).iter().copied())
            .map(|u| assignment[u])
            .collect();
        let subset = cheapest[f][&key].1;
        family_edges.insert(v, (0..m).filter(|&e| subset >> e & 1 == 1).collect());
    }
    Ok(assemble(inst, g, assignment, family_edges, SolveStats::default()))
}

/// Cartesian product of the members' candidate sets, lexicographic.
fn tuples_of(members: &[usize], cands: &CandidateSets) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &v in members {
        out = out
            .into_iter()
            .flat_map(|t| {
                cands.of(v).iter().map(move |&u| {
                    let mut t = t.clone();
                    t.push(u);
                    t
                })
            })
            .collect();
    }
    out
}

fn subset_components(g: &GeoGraph, subset: u32) -> Vec<usize> {
    let mask: Vec<bool> = (0..g.edge_count()).map(|e| subset >> e & 1 == 1).collect();
    g.components(Some(&mask))
}
