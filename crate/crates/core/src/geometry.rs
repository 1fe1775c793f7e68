//! Minimum total length of a tree whose topology and per-node boxes are fixed.
//!
//! Under `L1` the problem separates by axis. Each axis is a tree problem
//! `min Σ |x_j - x_k|` with interval bounds whose value functions are convex
//! piecewise linear with breakpoints at interval endpoints, so evaluating
//! them on the sorted endpoint set is exact. Under `L2` the smoothed
//! objective `Σ sqrt(|x_j - x_k|² + ε²)` is minimized by block updates, each
//! the exact minimizer of the usual Weiszfeld majorizer restricted to the
//! node's box, which makes every sweep monotone.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{dist, region_dist_lb, AxisBox, Instance, Metric, Neighborhood, Point};

/// Where one node of a fixed configuration may sit.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeDomain {
    Box(AxisBox),
    Free,
}

/// Tree with fixed topology and a fixed box (or no constraint) per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedConfig {
    pub domains: Vec<NodeDomain>,
    /// Undirected arcs forming a tree over all nodes.
    pub arcs: Vec<(usize, usize)>,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedSolution {
    pub positions: Vec<Point>,
    pub length: f64,
    /// False when the iteration cap was hit before the stopping rule.
    pub converged: bool,
}

impl FixedConfig {
    pub fn node_count(&self) -> usize {
        self.domains.len()
    }

    pub fn dimension(&self) -> usize {
        self.boxes().next().map(AxisBox::dim).unwrap_or(0)
    }

    fn boxes(&self) -> impl Iterator<Item = &AxisBox> {
        self.domains.iter().filter_map(|d| match d {
            NodeDomain::Box(b) => Some(b),
            NodeDomain::Free => None,
        })
    }

    /// Diameter of the union of all boxes, 1 when degenerate.
    pub fn scale(&self) -> f64 {
        let mut it = self.boxes();
        let Some(first) = it.next() else { return 1.0 };
        let hull = it.fold(first.clone(), |acc, b| acc.hull(b));
        let diam = dist(Metric::L2, &hull.lo.0, &hull.hi.0);
        if diam > 0.0 {
            diam
        } else {
            1.0
        }
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &(a, b) in &self.arcs {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        if n == 0 {
            return Err(Error::Input("empty configuration".into()));
        }
        if self.boxes().next().is_none() {
            return Err(Error::Input("configuration has no constrained node".into()));
        }
        let d = self.dimension();
        if self.boxes().any(|b| b.dim() != d || b.hi.dim() != d) {
            return Err(Error::Input("mixed box dimensions".into()));
        }
        if self.arcs.len() + 1 != n {
            return Err(Error::Input(format!(
                "{} arcs cannot form a tree over {n} nodes",
                self.arcs.len()
            )));
        }
        if self.arcs.iter().any(|&(a, b)| a >= n || b >= n || a == b) {
            return Err(Error::Input("arc endpoint out of range".into()));
        }
        if rooted_order(&self.adjacency()).0.len() != n {
            return Err(Error::Input("arcs do not connect every node".into()));
        }
        Ok(())
    }

    /// Objective for the given positions under the configuration's metric.
    pub fn length_of(&self, positions: &[Point]) -> f64 {
        self.arcs
            .iter()
            .map(|&(a, b)| dist(self.metric, &positions[a].0, &positions[b].0))
            .sum()
    }
}

/// BFS order from node 0 and the parent of each node.
fn rooted_order(adj: &[Vec<usize>]) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut parent = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut order = Vec::with_capacity(adj.len());
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some(v);
                queue.push_back(w);
            }
        }
    }
    (order, parent)
}

/// One-dimensional value functions sampled on a sorted breakpoint set.
pub(crate) mod line {
    /// `g(s_i) = min_j |s_i - s_j| + f(s_j)`.
    pub fn dist_transform(s: &[f64], f: &[f64]) -> Vec<f64> {
        let mut g = f.to_vec();
        for i in 1..s.len() {
            let c = g[i - 1] + (s[i] - s[i - 1]);
            if c < g[i] {
                g[i] = c;
            }
        }
        for i in (0..s.len().saturating_sub(1)).rev() {
            let c = g[i + 1] + (s[i + 1] - s[i]);
            if c < g[i] {
                g[i] = c;
            }
        }
        g
    }

    /// 0 on points inside one of the closed intervals, +inf elsewhere.
    pub fn indicator(s: &[f64], intervals: &[(f64, f64)]) -> Vec<f64> {
        s.iter()
            .map(|&x| {
                if intervals.iter().any(|&(lo, hi)| x >= lo && x <= hi) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }

    /// Linear interpolation of a sampled function; +inf outside the
    /// sampled range or across an infinite sample.
    pub fn interp(s: &[f64], f: &[f64], x: f64) -> f64 {
        match s.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => f[i],
            Err(0) => f64::INFINITY,
            Err(i) if i == s.len() => f64::INFINITY,
            Err(i) => {
                let (a, b) = (f[i - 1], f[i]);
                if !a.is_finite() || !b.is_finite() {
                    return f64::INFINITY;
                }
                let t = (x - s[i - 1]) / (s[i] - s[i - 1]);
                a + t * (b - a)
            }
        }
    }

    /// Minimum of `f` and the midpoint of its minimizing range among the
    /// evaluated points (convex `f` assumed).
    pub fn argmin_mid(points: &[(f64, f64)]) -> (f64, f64) {
        let best = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * best.abs().max(1.0);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, v) in points {
            if v <= best + tol {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (0.5 * (lo + hi), best)
    }
}

/// Sorted distinct box endpoints on axis `k`.
fn breakpoints<'a>(boxes: impl Iterator<Item = &'a AxisBox>, k: usize) -> Vec<f64> {
    let mut s: Vec<f64> = boxes.flat_map(|b| [b.lo.0[k], b.hi.0[k]]).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Exact `L1` optimum of a fixed configuration.
pub fn solve_fixed_l1(cfg: &FixedConfig) -> Result<FixedSolution> {
    if cfg.metric != Metric::L1 {
        return Err(Error::Input(format!("solve_fixed_l1 called with {}", cfg.metric)));
    }
    cfg.validate()?;
    Ok(l1_optimum(cfg))
}

fn l1_optimum(cfg: &FixedConfig) -> FixedSolution {
    let n = cfg.node_count();
    let d = cfg.dimension();
    let adj = cfg.adjacency();
    let (order, parent) = rooted_order(&adj);
    let mut coords = vec![vec![0.0; d]; n];
    let mut total = 0.0;
    for k in 0..d {
        let s = breakpoints(cfg.boxes(), k);
        let interval = |v: usize| match &cfg.domains[v] {
            NodeDomain::Box(b) => Some((b.lo.0[k], b.hi.0[k])),
            NodeDomain::Free => None,
        };
        // bottom-up value functions
        let mut value: Vec<Vec<f64>> = vec![Vec::new(); n];
        for &v in order.iter().rev() {
            let mut f = match interval(v) {
                Some(iv) => line::indicator(&s, &[iv]),
                None => vec![0.0; s.len()],
            };
            for &c in &adj[v] {
                if parent[c] == Some(v) {
                    let g = line::dist_transform(&s, &value[c]);
                    f.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
            }
            value[v] = f;
        }
        let root_points: Vec<(f64, f64)> = s.iter().copied().zip(value[0].iter().copied()).collect();
        let (x0, best) = line::argmin_mid(&root_points);
        total += best;
        coords[0][k] = x0;
        // top-down placement
        for &v in &order[1..] {
            let p = coords[parent[v].unwrap()][k];
            let f = &value[v];
            let mut pts: Vec<(f64, f64)> = s
                .iter()
                .zip(f)
                .filter(|(_, y)| y.is_finite())
                .map(|(&x, &y)| (x, y + (x - p).abs()))
                .collect();
            let at_parent = line::interp(&s, f, p);
            if at_parent.is_finite() {
                pts.push((p, at_parent));
            }
            coords[v][k] = line::argmin_mid(&pts).0;
        }
    }
    FixedSolution {
        positions: coords.into_iter().map(Point).collect(),
        length: total,
        converged: true,
    }
}

/// Options for the smoothed block-descent solver.
#[derive(Debug, Clone, Copy)]
pub struct L2Options {
    /// Relative objective change per sweep that ends a smoothing stage.
    pub rel_tol: f64,
    /// Cap on sweeps over all stages.
    pub max_sweeps: usize,
    /// Record the smoothed objective after every sweep.
    pub trace: bool,
}

impl Default for L2Options {
    fn default() -> Self {
        L2Options {
            rel_tol: 1e-11,
            max_sweeps: 200_000,
            trace: false,
        }
    }
}

/// Smoothing levels, as multiples of the configuration scale.
pub const SMOOTHING_SCHEDULE: [f64; 5] = [1e-4, 1e-6, 1e-8, 1e-10, 1e-12];

#[derive(Debug, Clone)]
pub struct L2Run {
    pub solution: FixedSolution,
    /// Smoothed objective after each sweep (when traced).
    pub trace: Vec<f64>,
    pub sweeps: usize,
    /// Final smoothing parameter.
    pub eps: f64,
}

/// `L2` optimum of a fixed configuration. `tol` is the absolute accuracy
/// target on the length; it tightens the per-sweep stopping rule when it is
/// stricter than the default.
pub fn solve_fixed_l2(cfg: &FixedConfig, tol: f64) -> Result<FixedSolution> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be positive, got {tol}")));
    }
    let mut opts = L2Options::default();
    let scale = cfg.scale();
    opts.rel_tol = opts.rel_tol.min(tol / scale * 1e-3);
    Ok(solve_fixed_l2_with(cfg, opts)?.solution)
}

pub fn solve_fixed_l2_with(cfg: &FixedConfig, opts: L2Options) -> Result<L2Run> {
    if cfg.metric != Metric::L2 {
        return Err(Error::Input(format!("solve_fixed_l2 called with {}", cfg.metric)));
    }
    cfg.validate()?;
    let n = cfg.node_count();
    let d = cfg.dimension();
    let adj = cfg.adjacency();
    let scale = cfg.scale();
    let mut x: Vec<Vec<f64>> = l1_optimum(cfg).positions.into_iter().map(|p| p.0).collect();
    // nodes pinned by singleton boxes never move
    let movable: Vec<bool> = cfg
        .domains
        .iter()
        .map(|dom| match dom {
            NodeDomain::Free => true,
            NodeDomain::Box(b) => (0..d).any(|k| b.lo.0[k] < b.hi.0[k]),
        })
        .collect();

    let smoothed = |x: &[Vec<f64>], eps: f64| -> f64 {
        cfg.arcs
            .iter()
            .map(|&(a, b)| {
                let sq: f64 = x[a].iter().zip(&x[b]).map(|(p, q)| (p - q) * (p - q)).sum();
                (sq + eps * eps).sqrt()
            })
            .sum()
    };

    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut converged = true;
    let mut eps = 0.0;
    let mut next = vec![0.0; d];
    'stages: for &level in &SMOOTHING_SCHEDULE {
        eps = level * scale;
        let mut prev = smoothed(&x, eps);
        loop {
            if sweeps >= opts.max_sweeps {
                converged = false;
                break 'stages;
            }
            sweeps += 1;
            for v in 0..n {
                if !movable[v] || adj[v].is_empty() {
                    continue;
                }
                let mut wsum = 0.0;
                next.iter_mut().for_each(|c| *c = 0.0);
                for &u in &adj[v] {
                    let sq: f64 = x[v].iter().zip(&x[u]).map(|(p, q)| (p - q) * (p - q)).sum();
                    let w = 1.0 / (sq + eps * eps).sqrt();
                    wsum += w;
                    for k in 0..d {
                        next[k] += w * x[u][k];
                    }
                }
                for k in 0..d {
                    let mut c = next[k] / wsum;
                    if let NodeDomain::Box(b) = &cfg.domains[v] {
                        c = c.clamp(b.lo.0[k], b.hi.0[k]);
                    }
                    next[k] = c;
                }
                // rounding in the weighted mean can undo an exact collocation
                let local = |p: &[f64]| -> f64 {
                    adj[v]
                        .iter()
                        .map(|&u| {
                            let sq: f64 = p.iter().zip(&x[u]).map(|(a, b)| (a - b) * (a - b)).sum();
                            (sq + eps * eps).sqrt()
                        })
                        .sum()
                };
                if local(&next) < local(&x[v]) {
                    x[v].copy_from_slice(&next);
                }
            }
            let cur = smoothed(&x, eps);
            if opts.trace {
                trace.push(cur);
            }
            let change = (prev - cur).abs() / cur.max(f64::MIN_POSITIVE);
            prev = cur;
            if change < opts.rel_tol {
                break;
            }
        }
    }
    let positions: Vec<Point> = x.into_iter().map(Point).collect();
    let length = cfg.length_of(&positions);
    Ok(L2Run {
        solution: FixedSolution {
            positions,
            length,
            converged,
        },
        trace,
        sweeps,
        eps,
    })
}

/// Euclidean Steiner point of three planar terminals.
pub fn fermat_point(a: &Point, b: &Point, c: &Point) -> Result<Point> {
    if a.dim() != 2 || b.dim() != 2 || c.dim() != 2 {
        return Err(Error::Input("fermat_point needs planar points".into()));
    }
    let v = [a.0.as_slice(), b.0.as_slice(), c.0.as_slice()];
    // any angle of at least 120 degrees makes that vertex optimal
    for i in 0..3 {
        let (p, q, r) = (v[i], v[(i + 1) % 3], v[(i + 2) % 3]);
        let u = [q[0] - p[0], q[1] - p[1]];
        let w = [r[0] - p[0], r[1] - p[1]];
        let nu = u[0].hypot(u[1]);
        let nw = w[0].hypot(w[1]);
        if nu == 0.0 || nw == 0.0 {
            return Ok(Point(p.to_vec()));
        }
        let cos = (u[0] * w[0] + u[1] * w[1]) / (nu * nw);
        if cos <= -0.5 {
            return Ok(Point(p.to_vec()));
        }
    }
    // apex of the equilateral triangle erected on side (q, r) away from p
    let apex = |p: &[f64], q: &[f64], r: &[f64]| -> [f64; 2] {
        let m = [0.5 * (q[0] + r[0]), 0.5 * (q[1] + r[1])];
        let h = 3f64.sqrt() / 2.0;
        let perp = [-(r[1] - q[1]) * h, (r[0] - q[0]) * h];
        let cand = [m[0] + perp[0], m[1] + perp[1]];
        let side = |x: [f64; 2]| (r[0] - q[0]) * (x[1] - q[1]) - (r[1] - q[1]) * (x[0] - q[0]);
        if side(cand) * side([p[0], p[1]]) > 0.0 {
            [m[0] - perp[0], m[1] - perp[1]]
        } else {
            cand
        }
    };
    let a1 = apex(v[0], v[1], v[2]);
    let b1 = apex(v[1], v[2], v[0]);
    // intersect line v0 -> a1 with line v1 -> b1
    let d1 = [a1[0] - v[0][0], a1[1] - v[0][1]];
    let d2 = [b1[0] - v[1][0], b1[1] - v[1][1]];
    let den = d1[0] * d2[1] - d1[1] * d2[0];
    let t = ((v[1][0] - v[0][0]) * d2[1] - (v[1][1] - v[0][1]) * d2[0]) / den;
    Ok(Point(vec![v[0][0] + t * d1[0], v[0][1] + t * d1[1]]))
}

/// Safe lower bound on the tree length for partially chosen components:
/// per parent, the largest region gap to any child. Routes of one parent may
/// share a trunk, so gaps of siblings are not added. `choice[v]` fixes the
/// component of node `v` when set.
pub fn lower_bound_relaxed(inst: &Instance, choice: &[Option<usize>]) -> f64 {
    let region = |v: usize| -> Neighborhood {
        match choice.get(v).copied().flatten() {
            Some(c) => Neighborhood::single(inst.neighborhoods[v].components[c].clone()),
            None => inst.neighborhoods[v].clone(),
        }
    };
    inst.topology
        .internal_nodes()
        .into_iter()
        .map(|v| {
            let rv = region(v);
            inst.topology
                .children(v)
                .iter()
                .map(|&c| region_dist_lb(inst.metric, &rv, &region(c)))
                .fold(0.0, f64::max)
        })
        .sum()
}
