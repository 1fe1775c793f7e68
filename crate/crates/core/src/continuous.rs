//! Exact continuous-domain solver: branch-and-bound over neighborhood
//! components and junction topologies, with fixed-configuration solves at
//! the leaves. Also the no-junction baseline, where every tree arc is
//! embedded as its own segment.

use std::collections::BTreeMap;

use crate::augment::{augment, junction_topologies_capped, AugmentedGraph, JunctionTopology, Slot, JUNCTION_CAP};
use crate::error::{Error, Result};
use crate::geometry::{
    line, lower_bound_relaxed, solve_fixed_l1, solve_fixed_l2_with, FixedConfig, L2Options, NodeDomain,
};
use crate::model::{dist, region_dist_lb, Instance, Metric, Point, Segment, Solution, SolveStats, Status};

#[derive(Debug, Clone, Copy)]
pub struct ContinuousOptions {
    /// Cap on evaluated search nodes; hitting it yields a heuristic result.
    pub budget: u64,
    /// Relative optimality tolerance for `L2`.
    pub l2_tol: f64,
    pub junction_cap: usize,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        ContinuousOptions {
            budget: 10_000_000,
            l2_tol: 1e-6,
            junction_cap: JUNCTION_CAP,
        }
    }
}

/// How the arcs of a parent fan are embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    /// Through a binary tree of junction points.
    Steiner,
    /// One segment per tree arc.
    Direct,
}

/// A partial assignment explored by the search.
#[derive(Debug, Clone)]
pub struct SearchNode {
    /// Chosen neighborhood component per tree node.
    pub component: Vec<Option<usize>>,
    /// Chosen junction topology per tree node (index into its enumeration).
    pub junction: Vec<Option<usize>>,
    pub bound: f64,
}

struct Problem<'a> {
    inst: &'a Instance,
    mode: Mode,
    aug: AugmentedGraph,
    order: Vec<usize>,
    axes: Vec<Vec<f64>>,
    /// `indicator[v][k][c]`: domain of component `c` of node `v` on axis `k`.
    indicator: Vec<Vec<Vec<Vec<f64>>>>,
    /// Union over components.
    indicator_any: Vec<Vec<Vec<f64>>>,
    junctions: Vec<Vec<JunctionTopology>>,
    component_order: Vec<usize>,
    family_order: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(inst: &'a Instance, mode: Mode, junction_cap: usize) -> Result<Self> {
        let topo = &inst.topology;
        let n = inst.node_count();
        let d = inst.dimension;
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let mut s: Vec<f64> = inst
                    .neighborhoods
                    .iter()
                    .flat_map(|nb| nb.components.iter().flat_map(move |b| [b.lo.0[k], b.hi.0[k]]))
                    .collect();
                s.sort_by(f64::total_cmp);
                s.dedup();
                s
            })
            .collect();
        let indicator: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
            .map(|v| {
                (0..d)
                    .map(|k| {
                        inst.neighborhoods[v]
                            .components
                            .iter()
                            .map(|b| line::indicator(&axes[k], &[(b.lo.0[k], b.hi.0[k])]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let indicator_any = indicator
            .iter()
            .map(|per_axis| {
                per_axis
                    .iter()
                    .map(|comps| {
                        let mut acc = comps[0].clone();
                        for c in &comps[1..] {
                            acc.iter_mut().zip(c).for_each(|(a, b)| *a = a.min(*b));
                        }
                        acc
                    })
                    .collect()
            })
            .collect();

        let mut cache: BTreeMap<usize, Vec<JunctionTopology>> = BTreeMap::new();
        let mut junctions = vec![Vec::new(); n];
        if mode == Mode::Steiner {
            for v in 0..n {
                let c = topo.children(v).len();
                if c >= 2 {
                    if !cache.contains_key(&c) {
                        cache.insert(c, junction_topologies_capped(c, junction_cap)?);
                    }
                    junctions[v] = cache[&c].clone();
                }
            }
        }

        // nodes whose component choice moves the region gaps the most go first
        let gap_spread = |v: usize| -> f64 {
            let mut neighbors: Vec<usize> = topo.children(v).to_vec();
            neighbors.extend(topo.parent(v));
            let per_comp: Vec<f64> = inst.neighborhoods[v]
                .components
                .iter()
                .map(|b| {
                    let single = crate::model::Neighborhood::single(b.clone());
                    neighbors
                        .iter()
                        .map(|&u| region_dist_lb(inst.metric, &single, &inst.neighborhoods[u]))
                        .sum::<f64>()
                })
                .collect();
            let hi = per_comp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = per_comp.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        };
        let mut component_order: Vec<(usize, f64)> = (0..n)
            .filter(|&v| inst.neighborhoods[v].components.len() > 1)
            .map(|v| (v, gap_spread(v)))
            .collect();
        component_order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut family_order: Vec<usize> = (0..n).filter(|&v| junctions[v].len() > 1).collect();
        family_order.sort_by(|&a, &b| topo.children(b).len().cmp(&topo.children(a).len()).then(a.cmp(&b)));

        Ok(Problem {
            inst,
            mode,
            aug: augment(topo),
            order: topo.preorder(),
            axes,
            indicator,
            indicator_any,
            junctions,
            component_order: component_order.into_iter().map(|p| p.0).collect(),
            family_order,
        })
    }

    fn root_node(&self) -> SearchNode {
        let n = self.inst.node_count();
        SearchNode {
            component: (0..n)
                .map(|v| (self.inst.neighborhoods[v].components.len() == 1).then_some(0))
                .collect(),
            junction: (0..n).map(|v| (self.junctions[v].len() == 1).then_some(0)).collect(),
            bound: 0.0,
        }
    }

    /// `L1` relaxation: undecided components use the union of their
    /// intervals per axis, undecided junction fans use the per-axis range of
    /// their terminals. Exact once everything is decided.
    fn l1_relaxation(&self, node: &SearchNode) -> f64 {
        (0..self.axes.len()).map(|k| self.axis_value(k, node)).sum()
    }

    fn axis_value(&self, k: usize, node: &SearchNode) -> f64 {
        let s = &self.axes[k];
        let topo = &self.inst.topology;
        let mut value: Vec<Vec<f64>> = vec![Vec::new(); self.inst.node_count()];
        for &v in self.order.iter().rev() {
            let mut f = match node.component[v] {
                Some(c) => self.indicator[v][k][c].clone(),
                None => self.indicator_any[v][k].clone(),
            };
            let kids = topo.children(v);
            if !kids.is_empty() {
                let cost = self.fan_cost(v, kids, &value, node, s);
                f.iter_mut().zip(&cost).for_each(|(a, b)| *a += b);
            }
            value[v] = f;
        }
        value[0].iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn fan_cost(&self, v: usize, kids: &[usize], value: &[Vec<f64>], node: &SearchNode, s: &[f64]) -> Vec<f64> {
        let sum_dt = || {
            let mut acc = vec![0.0; s.len()];
            for &c in kids {
                let g = line::dist_transform(s, &value[c]);
                acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            acc
        };
        if self.mode == Mode::Direct || kids.len() == 1 {
            return sum_dt();
        }
        match node.junction[v] {
            Some(t) => {
                let topo = &self.junctions[v][t];
                let m = topo.junctions.len();
                let mut at: Vec<Vec<f64>> = vec![Vec::new(); m];
                // preorder labels: children have larger indices
                for j in (0..m).rev() {
                    let mut acc = vec![0.0; s.len()];
                    for slot in topo.junctions[j] {
                        let g = match slot {
                            Slot::Leaf(i) => line::dist_transform(s, &value[kids[i]]),
                            Slot::Junction(q) => line::dist_transform(s, &at[q]),
                        };
                        acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                    at[j] = acc;
                }
                line::dist_transform(s, &at[0])
            }
            None => range_relaxation(s, kids.iter().map(|&c| value[c].as_slice())),
        }
    }

    fn bound(&self, node: &SearchNode) -> f64 {
        let relax = self.l1_relaxation(node);
        match self.inst.metric {
            Metric::L1 => relax,
            _ => {
                let scaled = relax / (self.inst.dimension as f64).sqrt();
                let gaps = if self.mode == Mode::Steiner {
                    lower_bound_relaxed(self.inst, &node.component)
                } else {
                    direct_gap_bound(self.inst, &node.component)
                };
                scaled.max(gaps)
            }
        }
    }

    fn is_leaf(&self, node: &SearchNode) -> bool {
        node.component.iter().all(Option::is_some) && node.junction.iter().enumerate().all(|(v, j)| j.is_some() || self.junctions[v].is_empty())
    }

    fn branch(&self, node: &SearchNode) -> Vec<SearchNode> {
        if let Some(&v) = self.component_order.iter().find(|&&v| node.component[v].is_none()) {
            return (0..self.inst.neighborhoods[v].components.len())
                .map(|c| {
                    let mut child = node.clone();
                    child.component[v] = Some(c);
                    child
                })
                .collect();
        }
        if let Some(&v) = self.family_order.iter().find(|&&v| node.junction[v].is_none()) {
            return (0..self.junctions[v].len())
                .map(|t| {
                    let mut child = node.clone();
                    child.junction[v] = Some(t);
                    child
                })
                .collect();
        }
        Vec::new()
    }

    /// Fixed configuration of a fully decided node. Config indices are the
    /// augmented-graph ids (original nodes only in direct mode).
    fn leaf_config(&self, node: &SearchNode) -> FixedConfig {
        let inst = self.inst;
        let topo = &inst.topology;
        let n = inst.node_count();
        let total = if self.mode == Mode::Steiner { self.aug.node_count() } else { n };
        let mut domains = vec![NodeDomain::Free; total];
        for v in 0..n {
            let c = node.component[v].expect("leaf has every component");
            domains[v] = NodeDomain::Box(inst.neighborhoods[v].components[c].clone());
        }
        let mut arcs = Vec::with_capacity(total - 1);
        for v in 0..n {
            let kids = topo.children(v);
            if self.mode == Mode::Direct || kids.len() <= 1 {
                arcs.extend(kids.iter().map(|&c| (v, c)));
                continue;
            }
            let aux = self.aug.aux_of(v);
            let jt = &self.junctions[v][node.junction[v].expect("leaf has every junction")];
            arcs.push((v, aux[0]));
            for (j, slots) in jt.junctions.iter().enumerate() {
                for slot in slots {
                    arcs.push(match *slot {
                        Slot::Leaf(i) => (aux[j], kids[i]),
                        Slot::Junction(q) => (aux[j], aux[q]),
                    });
                }
            }
        }
        FixedConfig {
            domains,
            arcs,
            metric: inst.metric,
        }
    }
}

/// `R(s) = min_{a <= s <= b} (b - a) + Σ_c min_{t in [a, b]} F_c(t)` on the
/// sample points: the terminal-range lower bound of a fan whose junction
/// topology is still open.
fn range_relaxation<'v>(s: &[f64], kids: impl Iterator<Item = &'v [f64]>) -> Vec<f64> {
    let kids: Vec<&[f64]> = kids.collect();
    let n = s.len();
    let mut best = vec![f64::INFINITY; n];
    let mut mins = vec![f64::INFINITY; kids.len()];
    let mut cost = vec![f64::INFINITY; n];
    for a in 0..n {
        mins.iter_mut().for_each(|m| *m = f64::INFINITY);
        for b in a..n {
            let mut total = s[b] - s[a];
            for (m, f) in mins.iter_mut().zip(&kids) {
                if f[b] < *m {
                    *m = f[b];
                }
                total += *m;
            }
            cost[b] = total;
        }
        // suffix minimum: any b >= i closes an interval covering i
        let mut run = f64::INFINITY;
        for i in (a..n).rev() {
            run = run.min(cost[i]);
            if run < best[i] {
                best[i] = run;
            }
        }
    }
    best
}

/// Gap bound for the baseline: every tree arc is its own segment.
fn direct_gap_bound(inst: &Instance, choice: &[Option<usize>]) -> f64 {
    let region = |v: usize| match choice[v] {
        Some(c) => crate::model::Neighborhood::single(inst.neighborhoods[v].components[c].clone()),
        None => inst.neighborhoods[v].clone(),
    };
    inst.topology
        .arcs()
        .into_iter()
        .map(|(p, c)| region_dist_lb(inst.metric, &region(p), &region(c)))
        .sum()
}

struct Incumbent {
    value: f64,
    positions: Vec<Point>,
    config: FixedConfig,
}

struct Outcome {
    incumbent: Option<Incumbent>,
    lower_bound: f64,
    complete: bool,
    stats: SolveStats,
}

fn evaluate_leaf(problem: &Problem, node: &SearchNode, tol: f64) -> (Incumbent, bool) {
    let cfg = problem.leaf_config(node);
    match cfg.metric {
        Metric::L1 => {
            let sol = solve_fixed_l1(&cfg).expect("leaf configuration is a valid tree");
            let value = node.bound;
            (
                Incumbent {
                    value,
                    positions: sol.positions,
                    config: cfg,
                },
                true,
            )
        }
        _ => {
            let opts = L2Options {
                rel_tol: L2Options::default().rel_tol.min(tol * 1e-3),
                ..L2Options::default()
            };
            let run = solve_fixed_l2_with(&cfg, opts).expect("leaf configuration is a valid tree");
            let converged = run.solution.converged;
            (
                Incumbent {
                    value: run.solution.length,
                    positions: run.solution.positions,
                    config: cfg,
                },
                converged,
            )
        }
    }
}

fn search(problem: &Problem, start: Option<Incumbent>, opts: &ContinuousOptions) -> Outcome {
    let exact_l1 = problem.inst.metric == Metric::L1;
    let slack = |v: f64| {
        if exact_l1 {
            1e-12 * v.abs().max(1.0)
        } else {
            opts.l2_tol * v.abs()
        }
    };
    let mut incumbent = start;
    let mut stats = SolveStats::default();
    let mut pruned_min = f64::INFINITY;
    let mut all_converged = true;

    let mut root = problem.root_node();
    root.bound = problem.bound(&root);
    stats.search_nodes += 1;
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        let best = incumbent.as_ref().map_or(f64::INFINITY, |i| i.value);
        if node.bound >= best - slack(best) {
            pruned_min = pruned_min.min(node.bound);
            continue;
        }
        if problem.is_leaf(&node) {
            stats.leaves += 1;
            let (cand, converged) = evaluate_leaf(problem, &node, opts.l2_tol);
            all_converged &= converged;
            if cand.value < best {
                // an ε-solved leaf above the bound still bounds this subtree
                pruned_min = pruned_min.min(node.bound.max(cand.value.min(best)));
                incumbent = Some(cand);
            } else {
                pruned_min = pruned_min.min(cand.value);
            }
            continue;
        }
        if stats.search_nodes >= opts.budget {
            stack.push(node);
            let open = stack.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
            let value = incumbent.as_ref().map_or(f64::INFINITY, |i| i.value);
            return Outcome {
                incumbent,
                lower_bound: open.min(pruned_min).min(value),
                complete: false,
                stats,
            };
        }
        let mut kids = problem.branch(&node);
        for k in &mut kids {
            k.bound = problem.bound(k).max(node.bound);
            stats.search_nodes += 1;
        }
        // best bound is explored first
        kids.sort_by(|a, b| b.bound.total_cmp(&a.bound));
        stack.extend(kids);
    }
    let value = incumbent.as_ref().map_or(f64::INFINITY, |i| i.value);
    Outcome {
        incumbent,
        lower_bound: pruned_min.min(value),
        complete: all_converged,
        stats,
    }
}

fn check_metric(inst: &Instance) -> Result<()> {
    match inst.metric {
        Metric::L1 | Metric::L2 => Ok(()),
        m => Err(Error::Unsupported(format!("continuous solver supports L1 and L2, not {m}"))),
    }
}

fn to_solution(inc: &Incumbent, metric: Metric, outcome_lb: f64, complete: bool, stats: SolveStats) -> Solution {
    let positions: BTreeMap<usize, Point> = inc.positions.iter().cloned().enumerate().collect();
    let edges: Vec<Segment> = inc
        .config
        .arcs
        .iter()
        .map(|&(a, b)| Segment {
            from: inc.positions[a].clone(),
            to: inc.positions[b].clone(),
            length: dist(metric, &inc.positions[a].0, &inc.positions[b].0),
            nodes: Some((a, b)),
        })
        .collect();
    let total: f64 = edges.iter().map(|s| s.length).sum();
    Solution {
        positions,
        edges,
        total_length: total,
        status: if complete { Status::Exact } else { Status::Heuristic },
        lower_bound: outcome_lb.min(total),
        assignment: None,
        stats,
    }
}

/// Baseline without junctions: minimize the sum of per-arc distances.
pub fn solve_ftmstn(inst: &Instance) -> Result<Solution> {
    solve_ftmstn_with(inst, &ContinuousOptions::default())
}

pub fn solve_ftmstn_with(inst: &Instance, opts: &ContinuousOptions) -> Result<Solution> {
    check_metric(inst)?;
    let problem = Problem::new(inst, Mode::Direct, opts.junction_cap)?;
    let out = search(&problem, None, opts);
    let inc = out
        .incumbent
        .as_ref()
        .ok_or_else(|| Error::Size("search budget exhausted before any embedding was found".into()))?;
    Ok(to_solution(inc, inst.metric, out.lower_bound, out.complete, out.stats))
}

/// Exact continuous solve with junctions; warm-started from the baseline.
pub fn solve_continuous(inst: &Instance, opts: &ContinuousOptions) -> Result<Solution> {
    check_metric(inst)?;
    let baseline = solve_ftmstn_with(inst, opts)?;
    let problem = Problem::new(inst, Mode::Steiner, opts.junction_cap)?;

    // the baseline embedding with every junction collocated with its owner
    let aug = &problem.aug;
    let mut positions: Vec<Point> = (0..inst.node_count()).map(|v| baseline.positions[&v].clone()).collect();
    for &owner in &aug.aux_owner {
        positions.push(positions[owner].clone());
    }
    let mut base_node = problem.root_node();
    for v in 0..inst.node_count() {
        base_node.component[v] = Some(component_of(inst, v, &positions[v]));
        if !problem.junctions[v].is_empty() {
            base_node.junction[v] = Some(0);
        }
    }
    let start = Incumbent {
        value: baseline.total_length,
        positions,
        config: problem.leaf_config(&base_node),
    };
    let out = search(&problem, Some(start), opts);
    let inc = out.incumbent.as_ref().expect("search keeps the warm start");
    let complete = out.complete && baseline.status == Status::Exact;
    let mut stats = out.stats;
    stats.search_nodes += baseline.stats.search_nodes;
    stats.leaves += baseline.stats.leaves;
    Ok(to_solution(inc, inst.metric, out.lower_bound, complete, stats))
}

fn component_of(inst: &Instance, v: usize, p: &Point) -> usize {
    let tol = 1e-9 * inst.scale();
    inst.neighborhoods[v]
        .components
        .iter()
        .position(|b| b.contains_tol(p, tol))
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeViolation {
    /// Smallest aux id of the collapsed cluster.
    pub node: usize,
    pub degree: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DegreeReport {
    /// Junction clusters with positive-length incidences that were checked.
    pub checked: usize,
    pub violations: Vec<DegreeViolation>,
}

/// Check junction degrees after collapsing nodes closer than `1e-7 · scale`:
/// exactly 3 under `L2`, 3 or 4 under `L1`. Clusters containing an original
/// node are exempt.
pub fn degree_check(inst: &Instance, sol: &Solution) -> DegreeReport {
    let n = inst.node_count();
    let ids: Vec<usize> = sol.positions.keys().copied().collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let pts: Vec<&Point> = sol.positions.values().collect();
    let threshold = 1e-7 * inst.scale();

    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if dist(Metric::L2, &pts[i].0, &pts[j].0) < threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let clusters: Vec<usize> = (0..ids.len()).map(|i| find(&mut parent, i)).collect();
    let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
    for seg in &sol.edges {
        let Some((a, b)) = seg.nodes else { continue };
        let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else { continue };
        let (ca, cb) = (clusters[ia], clusters[ib]);
        if ca != cb {
            *degree.entry(ca).or_default() += 1;
            *degree.entry(cb).or_default() += 1;
        }
    }
    let mut has_terminal: BTreeMap<usize, bool> = BTreeMap::new();
    let mut representative: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        let c = clusters[i];
        *has_terminal.entry(c).or_default() |= id < n;
        if id >= n {
            representative.entry(c).and_modify(|r: &mut usize| *r = (*r).min(id)).or_insert(id);
        }
    }
    let allowed = |d: usize| match inst.metric {
        Metric::L1 => d == 3 || d == 4,
        _ => d == 3,
    };
    let mut report = DegreeReport::default();
    for (&c, &node) in &representative {
        if has_terminal[&c] {
            continue;
        }
        let d = degree.get(&c).copied().unwrap_or(0);
        if d == 0 {
            continue;
        }
        report.checked += 1;
        if !allowed(d) {
            report.violations.push(DegreeViolation { node, degree: d });
        }
    }
    report
}
