//! Instance representation, validation, metrics and elementary geometry.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(coords.into())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<[f64; 2]> for Point {
    fn from(c: [f64; 2]) -> Self {
        Point(c.to_vec())
    }
}

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Point,
    pub hi: Point,
}

impl AxisBox {
    pub fn new(lo: impl Into<Vec<f64>>, hi: impl Into<Vec<f64>>) -> Self {
        AxisBox {
            lo: Point(lo.into()),
            hi: Point(hi.into()),
        }
    }

    /// Degenerate box holding one point.
    pub fn point(p: &Point) -> Self {
        AxisBox {
            lo: p.clone(),
            hi: p.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.contains_tol(p, 0.0)
    }

    /// Closed containment with an absolute slack on every face.
    pub fn contains_tol(&self, p: &Point, tol: f64) -> bool {
        p.0.iter()
            .zip(self.lo.0.iter().zip(&self.hi.0))
            .all(|(&x, (&lo, &hi))| x >= lo - tol && x <= hi + tol)
    }

    pub fn center(&self) -> Point {
        Point(
            self.lo
                .0
                .iter()
                .zip(&self.hi.0)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        )
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &AxisBox) -> AxisBox {
        AxisBox {
            lo: Point(
                self.lo.0.iter().zip(&other.lo.0).map(|(a, b)| a.min(*b)).collect(),
            ),
            hi: Point(
                self.hi.0.iter().zip(&other.hi.0).map(|(a, b)| a.max(*b)).collect(),
            ),
        }
    }

    pub fn intersects(&self, other: &AxisBox) -> bool {
        (0..self.dim()).all(|k| self.lo.0[k] <= other.hi.0[k] && other.lo.0[k] <= self.hi.0[k])
    }

    /// Corner points (2^d of them, possibly repeated for flat boxes).
    pub fn corners(&self) -> Vec<Point> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                Point(
                    (0..d)
                        .map(|k| if mask >> k & 1 == 1 { self.hi.0[k] } else { self.lo.0[k] })
                        .collect(),
                )
            })
            .collect()
    }
}

/// The region a tree node may be embedded in: a finite union of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Neighborhood {
    pub components: Vec<AxisBox>,
}

impl Neighborhood {
    pub fn new(components: Vec<AxisBox>) -> Self {
        Neighborhood { components }
    }

    pub fn single(b: AxisBox) -> Self {
        Neighborhood { components: vec![b] }
    }

    pub fn bounding_box(&self) -> AxisBox {
        let mut it = self.components.iter();
        let first = it.next().expect("neighborhood has at least one component").clone();
        it.fold(first, |acc, b| acc.hull(b))
    }

    pub fn contains_tol(&self, p: &Point, tol: f64) -> bool {
        self.components.iter().any(|b| b.contains_tol(p, tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    L1,
    L2,
    LInf,
}

impl Metric {
    /// Aggregate per-axis absolute differences according to the norm.
    pub fn aggregate(self, diffs: impl Iterator<Item = f64>) -> f64 {
        match self {
            Metric::L1 => diffs.map(f64::abs).sum(),
            Metric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::LInf => diffs.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L1 => "L1",
            Metric::L2 => "L2",
            Metric::LInf => "LInf",
        })
    }
}

/// Rooted tree over nodes `0..node_count`, root 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RootedTopology {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl RootedTopology {
    /// Build from the parent list of nodes `1..=n` (entry `i` is the parent of node `i + 1`).
    pub fn from_parents(parents: &[usize]) -> Result<Self> {
        let count = parents.len() + 1;
        let mut parent = vec![None; count];
        for (i, &p) in parents.iter().enumerate() {
            let v = i + 1;
            if p >= count {
                return Err(Error::Semantic(format!(
                    "node {v} has parent {p}, outside 0..{count}"
                )));
            }
            if p == v {
                return Err(Error::Semantic(format!("node {v} is its own parent (cycle)")));
            }
            parent[v] = Some(p);
        }
        // every node must reach the root within `count` steps
        for start in 1..count {
            let mut v = start;
            let mut steps = 0;
            while let Some(p) = parent[v] {
                v = p;
                steps += 1;
                if steps > count {
                    return Err(Error::Semantic(format!(
                        "parent map has a cycle through node {start}"
                    )));
                }
            }
            if v != 0 {
                return Err(Error::Semantic(format!("node {start} does not reach the root")));
            }
        }
        let mut children = vec![Vec::new(); count];
        for v in 1..count {
            children[parent[v].unwrap()].push(v);
        }
        Ok(RootedTopology { parent, children })
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        let n = self.node_count();
        (0..n).filter(|&v| self.is_leaf(v) && (v != 0 || n == 1)).collect()
    }

    /// Parent list in document order (parent of node 1, 2, ...).
    pub fn parents(&self) -> Vec<usize> {
        self.parent[1..].iter().map(|p| p.unwrap()).collect()
    }

    /// Arcs `(parent, child)` ordered by child index.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        (1..self.node_count()).map(|v| (self.parent[v].unwrap(), v)).collect()
    }

    /// Breadth-first order from the root; parents precede children.
    pub fn preorder(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.node_count());
        order.push(0);
        let mut i = 0;
        while i < order.len() {
            let v = order[i];
            order.extend_from_slice(&self.children[v]);
            i += 1;
        }
        order
    }

    /// Nodes with at least one child, in index order.
    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| !self.is_leaf(v)).collect()
    }
}

/// Axis-aligned area where routing edges are re-weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceZone {
    pub lo: Point,
    pub hi: Point,
    pub factor: f64,
}

impl PreferenceZone {
    pub fn region(&self) -> AxisBox {
        AxisBox {
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceDoc {
    dimension: usize,
    metric: Metric,
    parents: Vec<usize>,
    neighborhoods: Vec<Neighborhood>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    obstacles: Vec<AxisBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    preferences: Vec<PreferenceZone>,
}

/// A validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub topology: RootedTopology,
    pub neighborhoods: Vec<Neighborhood>,
    pub metric: Metric,
    pub dimension: usize,
    /// Regions removed from routing graphs (discrete domain only).
    pub obstacles: Vec<AxisBox>,
    /// Edge weight multipliers for routing graphs (discrete domain only).
    pub preferences: Vec<PreferenceZone>,
}

impl Instance {
    pub fn new(
        topology: RootedTopology,
        neighborhoods: Vec<Neighborhood>,
        metric: Metric,
    ) -> Result<Self> {
        let dimension = neighborhoods
            .first()
            .and_then(|n| n.components.first())
            .map(AxisBox::dim)
            .unwrap_or(0);
        let inst = Instance {
            topology,
            neighborhoods,
            metric,
            dimension,
            obstacles: Vec::new(),
            preferences: Vec::new(),
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn with_metric(&self, metric: Metric) -> Instance {
        Instance {
            metric,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::Semantic("dimension must be at least 1".into()));
        }
        if self.neighborhoods.len() != self.node_count() {
            return Err(Error::Semantic(format!(
                "{} neighborhoods for {} tree nodes",
                self.neighborhoods.len(),
                self.node_count()
            )));
        }
        let check_box = |what: &str, b: &AxisBox| -> Result<()> {
            if b.lo.dim() != d || b.hi.dim() != d {
                return Err(Error::Semantic(format!(
                    "{what}: box dimension {}/{} differs from instance dimension {d}",
                    b.lo.dim(),
                    b.hi.dim()
                )));
            }
            for k in 0..d {
                let (lo, hi) = (b.lo.0[k], b.hi.0[k]);
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Semantic(format!("{what}: non-finite coordinate")));
                }
                if lo > hi {
                    return Err(Error::Semantic(format!(
                        "{what}: lo {lo} exceeds hi {hi} on axis {k}"
                    )));
                }
            }
            Ok(())
        };
        for (v, nb) in self.neighborhoods.iter().enumerate() {
            if nb.components.is_empty() {
                return Err(Error::Semantic(format!("node {v} has an empty neighborhood")));
            }
            for b in &nb.components {
                check_box(&format!("node {v}"), b)?;
            }
        }
        for b in &self.obstacles {
            check_box("obstacle", b)?;
        }
        for z in &self.preferences {
            check_box("preference zone", &z.region())?;
            if !(z.factor >= 0.0 && z.factor.is_finite()) {
                return Err(Error::Semantic(format!(
                    "preference factor {} must be finite and non-negative",
                    z.factor
                )));
            }
        }
        Ok(())
    }

    /// Bounding box of every neighborhood component.
    pub fn extent(&self) -> AxisBox {
        let mut it = self.neighborhoods.iter().map(Neighborhood::bounding_box);
        let first = it.next().expect("instance has a root");
        it.fold(first, |acc, b| acc.hull(&b))
    }

    /// Euclidean diameter of the extent; 1 for a degenerate extent.
    pub fn scale(&self) -> f64 {
        let e = self.extent();
        let diam = metric_dist(Metric::L2, &e.lo, &e.hi).unwrap_or(0.0);
        if diam > 0.0 {
            diam
        } else {
            1.0
        }
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            dimension: self.dimension,
            metric: self.metric,
            parents: self.topology.parents(),
            neighborhoods: self.neighborhoods.clone(),
            obstacles: self.obstacles.clone(),
            preferences: self.preferences.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("instance serializes")
    }
}

/// Parse and validate an instance document.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    let topology = RootedTopology::from_parents(&doc.parents)?;
    let inst = Instance {
        topology,
        neighborhoods: doc.neighborhoods,
        metric: doc.metric,
        dimension: doc.dimension,
        obstacles: doc.obstacles,
        preferences: doc.preferences,
    };
    inst.validate()?;
    Ok(inst)
}

/// Norm distance between two points.
pub fn metric_dist(metric: Metric, a: &Point, b: &Point) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(dist(metric, &a.0, &b.0))
}

/// Unchecked distance on raw coordinate slices.
pub(crate) fn dist(metric: Metric, a: &[f64], b: &[f64]) -> f64 {
    metric.aggregate(a.iter().zip(b).map(|(x, y)| x - y))
}

/// Coordinate-wise clamp of `p` into `b`.
pub fn project_to_box(p: &Point, b: &AxisBox) -> Point {
    Point(
        p.0.iter()
            .zip(b.lo.0.iter().zip(&b.hi.0))
            .map(|(&x, (&lo, &hi))| x.clamp(lo, hi))
            .collect(),
    )
}

/// Distance between two boxes under `metric`.
pub fn box_dist(metric: Metric, a: &AxisBox, b: &AxisBox) -> f64 {
    metric.aggregate((0..a.dim()).map(|k| {
        (a.lo.0[k] - b.hi.0[k]).max(b.lo.0[k] - a.hi.0[k]).max(0.0)
    }))
}

/// Lower bound on `D(x, y)` over `x ∈ a`, `y ∈ b`.
pub fn region_dist_lb(metric: Metric, a: &Neighborhood, b: &Neighborhood) -> f64 {
    a.components
        .iter()
        .flat_map(|p| b.components.iter().map(move |q| box_dist(metric, p, q)))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Exact,
    Heuristic,
    Infeasible,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Exact => "exact",
            Status::Heuristic => "heuristic",
            Status::Infeasible => "infeasible",
        })
    }
}

/// One embedded segment of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: Point,
    pub to: Point,
    /// Contribution to the objective (metric length, or weighted graph length).
    pub length: f64,
    /// Endpoint node ids, when the segment joins two solution nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<(usize, usize)>,
}

/// Counters reported by the solvers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub search_nodes: u64,
    pub leaves: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Node id to position; auxiliary nodes use ids past the original nodes.
    pub positions: BTreeMap<usize, Point>,
    pub edges: Vec<Segment>,
    /// `null` in JSON when infinite (infeasible).
    #[serde(with = "inf_as_null")]
    pub total_length: f64,
    pub status: Status,
    #[serde(with = "inf_as_null")]
    pub lower_bound: f64,
    /// Graph node chosen for each tree node (discrete domain).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Vec<usize>>,
    #[serde(skip)]
    pub stats: SolveStats,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Solution {
    pub fn infeasible(lower_bound: f64) -> Self {
        Solution {
            positions: BTreeMap::new(),
            edges: Vec::new(),
            total_length: f64::INFINITY,
            status: Status::Infeasible,
            lower_bound,
            assignment: None,
            stats: SolveStats::default(),
        }
    }

    /// Sum of segment lengths.
    pub fn edge_length(&self) -> f64 {
        self.edges.iter().map(|s| s.length).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
