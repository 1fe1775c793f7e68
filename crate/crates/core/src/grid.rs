//! Geometric routing graphs for the discrete domain, candidate sets and
//! the per-family window reduction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dist, AxisBox, Instance, Metric, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Hanan,
    Square,
    Triangular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected graph with embedded nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoGraph {
    pub nodes: Vec<Point>,
    pub edges: Vec<GraphEdge>,
    /// `(neighbor, edge index)` per node.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl GeoGraph {
    pub fn new(nodes: Vec<Point>, edges: Vec<GraphEdge>) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = std::collections::HashSet::new();
        for (i, e) in edges.iter().enumerate() {
            if e.a >= nodes.len() || e.b >= nodes.len() || e.a == e.b {
                return Err(Error::Input(format!("edge {i} ({}, {}) is not a proper pair", e.a, e.b)));
            }
            if !(e.weight >= 0.0) {
                return Err(Error::Input(format!("edge {i} has negative weight {}", e.weight)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::Input(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            adjacency[e.a].push((e.b, i));
            adjacency[e.b].push((e.a, i));
        }
        Ok(GeoGraph { nodes, edges, adjacency })
    }

    /// For edge lists that are proper and duplicate-free by construction.
    fn from_trusted(nodes: Vec<Point>, edges: Vec<GraphEdge>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.a].push((e.b, i));
            adjacency[e.b].push((e.a, i));
        }
        GeoGraph { nodes, edges, adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    /// `"i j weight"` per line.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.a, e.b, e.weight).unwrap();
        }
        out
    }

    /// `"i x y ..."` per line.
    pub fn node_table(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.nodes.iter().enumerate() {
            write!(out, "{i}").unwrap();
            for c in &p.0 {
                write!(out, " {c}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Connected component label per node, optionally over a subset of edges.
    pub fn components(&self, mask: Option<&[bool]>) -> Vec<usize> {
        let n = self.nodes.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &(w, e) in &self.adjacency[u] {
                    if mask.is_some_and(|m| !m[e]) || label[w] != usize::MAX {
                        continue;
                    }
                    label[w] = next;
                    stack.push(w);
                }
            }
            next += 1;
        }
        label
    }

    /// Keep only `keep` nodes, renumbered in order, and the edges between them.
    fn restrict(&self, keep: &[bool]) -> GeoGraph {
        let mut map = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, p) in self.nodes.iter().enumerate() {
            if keep[i] {
                map[i] = nodes.len();
                nodes.push(p.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| keep[e.a] && keep[e.b])
            .map(|e| GraphEdge {
                a: map[e.a],
                b: map[e.b],
                weight: e.weight,
            })
            .collect();
        GeoGraph::from_trusted(nodes, edges)
    }
}

/// Closed segment-box intersection by slab clipping.
fn segment_hits_box(p: &[f64], q: &[f64], b: &AxisBox) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..p.len() {
        let d = q[k] - p[k];
        let (lo, hi) = (b.lo.0[k], b.hi.0[k]);
        if d == 0.0 {
            if p[k] < lo || p[k] > hi {
                return false;
            }
            continue;
        }
        let (mut a, mut c) = ((lo - p[k]) / d, (hi - p[k]) / d);
        if a > c {
            std::mem::swap(&mut a, &mut c);
        }
        t0 = t0.max(a);
        t1 = t1.min(c);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Lattice with per-axis coordinate lists; axis 0 varies fastest.
fn lattice(coords: &[Vec<f64>], diagonal: bool) -> (Vec<Point>, Vec<(usize, usize)>) {
    let d = coords.len();
    let dims: Vec<usize> = coords.iter().map(Vec::len).collect();
    let mut stride = vec![1usize; d];
    for k in 1..d {
        stride[k] = stride[k - 1] * dims[k - 1];
    }
    let total: usize = dims.iter().product();
    let mut nodes = Vec::with_capacity(total);
    let mut pairs = Vec::new();
    for idx in 0..total {
        let digits: Vec<usize> = (0..d).map(|k| idx / stride[k] % dims[k]).collect();
        nodes.push(Point((0..d).map(|k| coords[k][digits[k]]).collect()));
        for k in 0..d {
            if digits[k] + 1 < dims[k] {
                pairs.push((idx, idx + stride[k]));
            }
        }
        if diagonal && digits[0] + 1 < dims[0] && digits[1] + 1 < dims[1] {
            pairs.push((idx, idx + stride[0] + stride[1]));
        }
    }
    (nodes, pairs)
}

fn instance_tol(inst: &Instance) -> f64 {
    1e-9 * inst.scale().max(1.0)
}

/// Build the routing graph over the instance extent. Obstacles are the
/// union of the instance's own and `obstacles`. Edge weight is the metric
/// length times every preference factor whose zone holds the midpoint.
pub fn build_grid(inst: &Instance, kind: GridKind, step: f64, obstacles: &[AxisBox]) -> Result<GeoGraph> {
    let d = inst.dimension;
    let extent = inst.extent();
    let coords: Vec<Vec<f64>> = match kind {
        GridKind::Hanan => (0..d)
            .map(|k| {
                let mut c: Vec<f64> = inst
                    .neighborhoods
                    .iter()
                    .flat_map(|nb| nb.components.iter().flat_map(move |b| [b.lo.0[k], b.hi.0[k]]))
                    .collect();
                c.sort_by(f64::total_cmp);
                c.dedup();
                c
            })
            .collect(),
        GridKind::Square | GridKind::Triangular => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Input(format!("grid step must be positive, got {step}")));
            }
            if kind == GridKind::Triangular && d != 2 {
                return Err(Error::Unsupported(format!("triangular grids are planar, instance has dimension {d}")));
            }
            (0..d)
                .map(|k| {
                    let (lo, hi) = (extent.lo.0[k], extent.hi.0[k]);
                    let count = ((hi - lo) / step - 1e-9).ceil().max(0.0) as usize + 1;
                    (0..count).map(|i| lo + i as f64 * step).collect()
                })
                .collect()
        }
    };
    let total: f64 = coords.iter().map(|c| c.len() as f64).product();
    if total > 5e6 {
        return Err(Error::Size(format!("grid would have {total} nodes")));
    }
    let (nodes, pairs) = lattice(&coords, kind == GridKind::Triangular);

    let blocked: Vec<&AxisBox> = inst.obstacles.iter().chain(obstacles).collect();
    let metric = inst.metric;
    let node_ok: Vec<bool> = nodes.iter().map(|p| !blocked.iter().any(|b| b.contains(p))).collect();
    let mut edges = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        if !node_ok[a] || !node_ok[b] {
            continue;
        }
        let (p, q) = (&nodes[a].0, &nodes[b].0);
        if blocked.iter().any(|o| segment_hits_box(p, q, o)) {
            continue;
        }
        let mut factor = 1.0;
        if !inst.preferences.is_empty() {
            let mid = Point(p.iter().zip(q).map(|(x, y)| 0.5 * (x + y)).collect());
            factor = inst.preferences.iter().filter(|z| z.region().contains(&mid)).map(|z| z.factor).product();
        }
        edges.push(GraphEdge {
            a,
            b,
            weight: dist(metric, p, q) * factor,
        });
    }
    let full = GeoGraph::from_trusted(nodes, edges);
    keep_feasible_component(inst, full, node_ok)
}

/// Drop blocked nodes and every component that misses some neighborhood.
fn keep_feasible_component(inst: &Instance, g: GeoGraph, node_ok: Vec<bool>) -> Result<GeoGraph> {
    let tol = instance_tol(inst);
    let label = g.components(None);
    let comp_count = label.iter().copied().max().map_or(0, |m| m + 1);
    // per component, which tree nodes have a candidate there
    let mut covered = vec![vec![false; inst.node_count()]; comp_count];
    let mut size = vec![0usize; comp_count];
    for (i, p) in g.nodes.iter().enumerate() {
        if !node_ok[i] {
            continue;
        }
        size[label[i]] += 1;
        for (v, nb) in inst.neighborhoods.iter().enumerate() {
            if nb.contains_tol(p, tol) {
                covered[label[i]][v] = true;
            }
        }
    }
    let best = (0..comp_count)
        .filter(|&c| covered[c].iter().all(|&x| x))
        .max_by(|&a, &b| size[a].cmp(&size[b]).then(b.cmp(&a)));
    match best {
        Some(_) if comp_count == 1 && node_ok.iter().all(|&ok| ok) => Ok(g),
        Some(c) => {
            let keep: Vec<bool> = (0..g.node_count()).map(|i| node_ok[i] && label[i] == c).collect();
            Ok(g.restrict(&keep))
        }
        None => {
            let missing: Vec<String> = inst
                .neighborhoods
                .iter()
                .enumerate()
                .filter(|(v, _)| !covered.iter().any(|c| c[*v]))
                .map(|(v, _)| v.to_string())
                .collect();
            if missing.is_empty() {
                Err(Error::Infeasible(
                    "obstacles separate the candidate sets: no connected part of the grid reaches every neighborhood"
                        .into(),
                ))
            } else {
                Err(Error::Infeasible(format!(
                    "no grid node inside the neighborhoods of nodes {}",
                    missing.join(", ")
                )))
            }
        }
    }
}

/// Graph nodes inside each tree node's neighborhood (closed membership).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSets {
    pub sets: Vec<Vec<usize>>,
}

impl CandidateSets {
    pub fn of(&self, v: usize) -> &[usize] {
        &self.sets[v]
    }

    /// Number of full assignments.
    pub fn product(&self) -> f64 {
        self.sets.iter().map(|s| s.len() as f64).product()
    }
}

pub fn candidate_sets(inst: &Instance, g: &GeoGraph) -> Result<CandidateSets> {
    let tol = instance_tol(inst);
    let mut sets = Vec::with_capacity(inst.node_count());
    for (v, nb) in inst.neighborhoods.iter().enumerate() {
        let s: Vec<usize> = (0..g.node_count()).filter(|&i| nb.contains_tol(&g.nodes[i], tol)).collect();
        if s.is_empty() {
            return Err(Error::Infeasible(format!("no graph node inside the neighborhood of node {v}")));
        }
        sets.push(s);
    }
    Ok(CandidateSets { sets })
}

/// Region that holds every optimal route of one parent-children family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyWindow {
    pub node: usize,
    /// Rectangular hull, used for mask tests under every metric.
    pub rect: AxisBox,
    /// Planar convex hull (counter-clockwise) for `L2` instances.
    pub hull: Option<Vec<Point>>,
}

pub fn family_windows(inst: &Instance) -> BTreeMap<usize, FamilyWindow> {
    let topo = &inst.topology;
    let mut out = BTreeMap::new();
    for v in topo.internal_nodes() {
        let members: Vec<usize> = std::iter::once(v).chain(topo.children(v).iter().copied()).collect();
        let boxes: Vec<&AxisBox> = members.iter().flat_map(|&u| inst.neighborhoods[u].components.iter()).collect();
        let rect = boxes[1..].iter().fold(boxes[0].clone(), |acc, b| acc.hull(b));
        let hull = (inst.metric == Metric::L2 && inst.dimension == 2)
            .then(|| convex_hull(boxes.iter().flat_map(|b| b.corners()).collect()));
        out.insert(v, FamilyWindow { node: v, rect, hull });
    }
    out
}

/// Monotone chain; collinear points dropped.
fn convex_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]).then(a.0[1].total_cmp(&b.0[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point, a: &Point, b: &Point| {
        (a.0[0] - o.0[0]) * (b.0[1] - o.0[1]) - (a.0[1] - o.0[1]) * (b.0[0] - o.0[0])
    };
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReduction {
    pub node: usize,
    pub total_edges: usize,
    pub kept_edges: usize,
    /// False when the window disconnected the family and fixing was dropped.
    pub enabled: bool,
}

impl FamilyReduction {
    pub fn reduction_pct(&self) -> f64 {
        if self.total_edges == 0 {
            0.0
        } else {
            100.0 * (self.total_edges - self.kept_edges) as f64 / self.total_edges as f64
        }
    }
}

/// Allowed edges per family (keyed by the parent node).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FixingMasks {
    pub masks: BTreeMap<usize, Vec<bool>>,
    pub stats: Vec<FamilyReduction>,
    pub warnings: Vec<String>,
}

impl FixingMasks {
    pub fn mask(&self, v: usize) -> Option<&[bool]> {
        self.masks.get(&v).map(Vec::as_slice)
    }

    /// Mean removed share over families, in percent.
    pub fn reduction_pct(&self) -> f64 {
        if self.stats.is_empty() {
            return 0.0;
        }
        self.stats.iter().map(FamilyReduction::reduction_pct).sum::<f64>() / self.stats.len() as f64
    }
}

/// Restrict each family to the edges with both endpoints in its window.
/// A family whose candidates would not share one component of its masked
/// subgraph keeps every edge and gets a warning.
pub fn apply_fixing(
    g: &GeoGraph,
    inst: &Instance,
    cands: &CandidateSets,
    windows: &BTreeMap<usize, FamilyWindow>,
) -> FixingMasks {
    let tol = instance_tol(inst);
    let mut out = FixingMasks::default();
    for (&v, w) in windows {
        let inside: Vec<bool> = g.nodes.iter().map(|p| w.rect.contains_tol(p, tol)).collect();
        let mask: Vec<bool> = g.edges.iter().map(|e| inside[e.a] && inside[e.b]).collect();
        let label = g.components(Some(&mask));
        let family = std::iter::once(v).chain(inst.topology.children(v).iter().copied());
        let mut labels = family.flat_map(|u| cands.of(u).iter().map(|&i| label[i]));
        let first = labels.next();
        let connected = labels.all(|l| Some(l) == first);
        let kept = mask.iter().filter(|&&m| m).count();
        if connected {
            out.stats.push(FamilyReduction {
                node: v,
                total_edges: g.edge_count(),
                kept_edges: kept,
                enabled: true,
            });
            out.masks.insert(v, mask);
        } else {
            out.warnings.push(format!(
                "window of family {v} disconnects its candidates; fixing disabled for it"
            ));
            out.stats.push(FamilyReduction {
                node: v,
                total_edges: g.edge_count(),
                kept_edges: g.edge_count(),
                enabled: false,
            });
            out.masks.insert(v, vec![true; g.edge_count()]);
        }
    }
    out
}
