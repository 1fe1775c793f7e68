//! Mixed-integer models for external solvers: the continuous `L1` flow and
//! projected formulations, the routing model on a graph, fixed-format MPS
//! and LP files, and a file-based solver adapter.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::augment::augment;
use crate::error::{Error, Result};
use crate::grid::{CandidateSets, FixingMasks, GeoGraph};
use crate::model::{Instance, Metric};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Linear model with a minimization objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MilpModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub formulation: String,
    pub instance_hash: String,
    pub notes: Vec<String>,
    index: HashMap<String, usize>,
}

impl MilpModel {
    pub fn new(formulation: impl Into<String>, instance_hash: impl Into<String>) -> Self {
        MilpModel {
            formulation: formulation.into(),
            instance_hash: instance_hash.into(),
            ..MilpModel::default()
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let id = self.variables.len();
        let prev = self.index.insert(name.clone(), id);
        assert!(prev.is_none(), "duplicate variable {name}");
        self.variables.push(Variable { name, kind, lower, upper });
        id
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn binary_count(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.variables.iter().filter(|v| v.name.starts_with(prefix)).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(Error::Input("model has no constraints".into()));
        }
        let mut rows = std::collections::HashSet::new();
        for c in &self.constraints {
            if !rows.insert(c.name.as_str()) {
                return Err(Error::Input(format!("duplicate row {}", c.name)));
            }
            if let Some((v, _)) = c.terms.iter().find(|(v, _)| *v >= self.variables.len()) {
                return Err(Error::Input(format!("row {} references unknown column {v}", c.name)));
            }
        }
        Ok(())
    }

    fn evaluate(terms: &[(usize, f64)], x: &[f64]) -> f64 {
        terms.iter().map(|&(v, a)| a * x[v]).sum()
    }
}

/// FNV-1a over the instance document, as 16 hex digits.
pub fn instance_hash(inst: &Instance) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in inst.to_json().bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuousVariant {
    /// Path flows per leaf.
    Flow,
    /// Arc variables only, with degree rows on the junctions.
    Projected,
}

/// Continuous `L1` model on the augmented graph.
pub fn build_continuous_l1_milp(inst: &Instance, variant: ContinuousVariant) -> Result<MilpModel> {
    if inst.metric != Metric::L1 {
        return Err(Error::Input(format!("the linear continuous model needs L1, instance uses {}", inst.metric)));
    }
    let id = match variant {
        ContinuousVariant::Flow => "cont-flow",
        ContinuousVariant::Projected => "cont-proj",
    };
    let mut m = MilpModel::new(id, instance_hash(inst));
    let aug = augment(&inst.topology);
    let n = inst.node_count();
    let d = inst.dimension;
    let ext = inst.extent();
    let diameter: f64 = (0..d).map(|k| ext.hi.0[k] - ext.lo.0[k]).sum();
    let big_m = if diameter > 0.0 { diameter * 1.01 } else { 1.0 };
    m.notes.push(format!("big-M {big_m}"));

    // coordinates; multi-component nodes select a box through binaries
    let mut x = vec![vec![0usize; d]; aug.node_count()];
    for j in 0..aug.node_count() {
        let bound = if j < n { inst.neighborhoods[j].bounding_box() } else { ext.clone() };
        for k in 0..d {
            x[j][k] = m.add_var(format!("x_{j}_{k}"), VarKind::Continuous, bound.lo.0[k], bound.hi.0[k]);
        }
    }
    for j in 0..n {
        let comps = &inst.neighborhoods[j].components;
        if comps.len() < 2 {
            continue;
        }
        let bb = inst.neighborhoods[j].bounding_box();
        let z: Vec<usize> = (0..comps.len())
            .map(|c| m.add_var(format!("z_{j}_{c}"), VarKind::Binary, 0.0, 1.0))
            .collect();
        m.add_row(format!("pick_{j}"), z.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0);
        for (c, b) in comps.iter().enumerate() {
            for k in 0..d {
                let (lo, hi) = (b.lo.0[k], b.hi.0[k]);
                let (blo, bhi) = (bb.lo.0[k], bb.hi.0[k]);
                // x >= lo z + blo (1 - z) and x <= hi z + bhi (1 - z)
                m.add_row(format!("boxlo_{j}_{c}_{k}"), vec![(x[j][k], 1.0), (z[c], -(lo - blo))], Sense::Ge, blo);
                m.add_row(format!("boxhi_{j}_{c}_{k}"), vec![(x[j][k], 1.0), (z[c], bhi - hi)], Sense::Le, bhi);
            }
        }
    }

    let mut y = HashMap::new();
    for &(a, b) in &aug.arcs {
        let ya = m.add_var(format!("y_{a}_{b}"), VarKind::Binary, 0.0, 1.0);
        let da = m.add_var(format!("d_{a}_{b}"), VarKind::Continuous, 0.0, big_m);
        let pa = m.add_var(format!("p_{a}_{b}"), VarKind::Continuous, 0.0, big_m);
        let mut sum = vec![(da, 1.0)];
        for k in 0..d {
            let u = m.add_var(format!("u_{a}_{b}_{k}"), VarKind::Continuous, 0.0, f64::INFINITY);
            m.add_row(format!("absp_{a}_{b}_{k}"), vec![(u, 1.0), (x[a][k], -1.0), (x[b][k], 1.0)], Sense::Ge, 0.0);
            m.add_row(format!("absn_{a}_{b}_{k}"), vec![(u, 1.0), (x[a][k], 1.0), (x[b][k], -1.0)], Sense::Ge, 0.0);
            sum.push((u, -1.0));
        }
        m.add_row(format!("len_{a}_{b}"), sum, Sense::Ge, 0.0);
        // p = d y
        m.add_row(format!("mc1_{a}_{b}"), vec![(pa, 1.0), (da, -1.0), (ya, -big_m)], Sense::Ge, -big_m);
        m.add_row(format!("mc2_{a}_{b}"), vec![(pa, 1.0), (da, -1.0)], Sense::Le, 0.0);
        m.add_row(format!("mc3_{a}_{b}"), vec![(pa, 1.0), (ya, -big_m)], Sense::Le, 0.0);
        m.objective.push((pa, 1.0));
        y.insert((a, b), ya);
    }
    let out_arcs = |j: usize| aug.arcs.iter().filter(move |a| a.0 == j).copied();
    let in_arcs = |j: usize| aug.arcs.iter().filter(move |a| a.1 == j).copied();

    match variant {
        ContinuousVariant::Flow => {
            for &l in &aug.leaves {
                let mut f = HashMap::new();
                for &(a, b) in &aug.arcs {
                    let v = m.add_var(format!("f_{l}_{a}_{b}"), VarKind::Continuous, 0.0, 1.0);
                    f.insert((a, b), v);
                    m.add_row(format!("link_{l}_{a}_{b}"), vec![(v, 1.0), (y[&(a, b)], -1.0)], Sense::Le, 0.0);
                }
                m.add_row(format!("src_{l}"), out_arcs(0).map(|a| (f[&a], 1.0)).collect(), Sense::Eq, 1.0);
                for j in 1..aug.node_count() {
                    if j == l {
                        continue;
                    }
                    let mut terms: Vec<(usize, f64)> = out_arcs(j).map(|a| (f[&a], 1.0)).collect();
                    terms.extend(in_arcs(j).map(|a| (f[&a], -1.0)));
                    if !terms.is_empty() {
                        m.add_row(format!("cons_{l}_{j}"), terms, Sense::Eq, 0.0);
                    }
                }
                m.add_row(format!("sink_{l}"), in_arcs(l).map(|a| (f[&a], 1.0)).collect(), Sense::Eq, 1.0);
            }
        }
        ContinuousVariant::Projected => {
            m.notes.push("one-out rows cover original non-leaf nodes only".into());
            m.notes.push("junction in-degree fixed to one".into());
            for j in inst.topology.internal_nodes() {
                m.add_row(format!("out_{j}"), out_arcs(j).map(|a| (y[&a], 1.0)).collect(), Sense::Eq, 1.0);
            }
            for j in 1..n {
                m.add_row(format!("in_{j}"), in_arcs(j).map(|a| (y[&a], 1.0)).collect(), Sense::Eq, 1.0);
            }
            for j in n..aug.node_count() {
                m.add_row(format!("in_{j}"), in_arcs(j).map(|a| (y[&a], 1.0)).collect(), Sense::Eq, 1.0);
                let deg: Vec<(usize, f64)> = out_arcs(j).chain(in_arcs(j)).map(|a| (y[&a], 1.0)).collect();
                m.add_row(format!("deglo_{j}"), deg.clone(), Sense::Ge, 3.0);
                m.add_row(format!("deghi_{j}"), deg, Sense::Le, 4.0);
            }
            for &(a, b) in &aug.arcs {
                if a < b && aug.is_aux(a) && aug.is_aux(b) {
                    m.add_row(format!("dir_{a}_{b}"), vec![(y[&(a, b)], 1.0), (y[&(b, a)], 1.0)], Sense::Le, 1.0);
                }
            }
        }
    }
    Ok(m)
}

/// Routing model on a graph: each family pays for its own edge set.
pub fn build_discrete_milp(
    inst: &Instance,
    g: &GeoGraph,
    cands: &CandidateSets,
    masks: Option<&FixingMasks>,
) -> Result<MilpModel> {
    let n = inst.node_count();
    if cands.sets.len() != n || cands.sets.iter().any(Vec::is_empty) {
        return Err(Error::Input("every tree node needs a non-empty candidate set".into()));
    }
    let mut m = MilpModel::new("disc", instance_hash(inst));
    m.notes.push("edge variables are per family".into());
    let mut t: Vec<HashMap<usize, usize>> = vec![HashMap::new(); n];
    for j in 0..n {
        let set = cands.of(j);
        let lo = if set.len() == 1 { 1.0 } else { 0.0 };
        for &i in set {
            t[j].insert(i, m.add_var(format!("t_{j}_{i}"), VarKind::Binary, lo, 1.0));
        }
        m.add_row(format!("assign_{j}"), set.iter().map(|i| (t[j][i], 1.0)).collect(), Sense::Eq, 1.0);
    }
    let topo = &inst.topology;
    for j in topo.internal_nodes() {
        let allowed: Vec<usize> = (0..g.edge_count())
            .filter(|&e| masks.and_then(|mk| mk.mask(j)).is_none_or(|mk| mk[e]))
            .collect();
        let q: Vec<usize> = allowed
            .iter()
            .map(|&e| {
                let ge = &g.edges[e];
                let v = m.add_var(format!("q_{j}_{}_{}", ge.a, ge.b), VarKind::Binary, 0.0, 1.0);
                m.objective.push((v, ge.weight));
                v
            })
            .collect();
        for &k in topo.children(j) {
            let mut flow_at: Vec<Vec<(usize, f64)>> = vec![Vec::new(); g.node_count()];
            for (idx, &e) in allowed.iter().enumerate() {
                let ge = &g.edges[e];
                let fwd = m.add_var(format!("f_{j}_{k}_{}_{}", ge.a, ge.b), VarKind::Continuous, 0.0, 1.0);
                let rev = m.add_var(format!("f_{j}_{k}_{}_{}", ge.b, ge.a), VarKind::Continuous, 0.0, 1.0);
                flow_at[ge.a].extend([(fwd, 1.0), (rev, -1.0)]);
                flow_at[ge.b].extend([(rev, 1.0), (fwd, -1.0)]);
                m.add_row(
                    format!("use_{j}_{k}_{}_{}", ge.a, ge.b),
                    vec![(fwd, 1.0), (rev, 1.0), (q[idx], -1.0)],
                    Sense::Le,
                    0.0,
                );
            }
            // out - in = t_j - t_k
            for (i, mut terms) in flow_at.into_iter().enumerate() {
                let (src, dst) = (t[j].get(&i), t[k].get(&i));
                if terms.is_empty() && src.is_none() && dst.is_none() {
                    continue;
                }
                terms.extend(src.map(|&v| (v, -1.0)));
                terms.extend(dst.map(|&v| (v, 1.0)));
                m.add_row(format!("flow_{j}_{k}_{i}"), terms, Sense::Eq, 0.0);
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFormat {
    Mps,
    Lp,
}

/// Shortest decimal form that fits the 12-character MPS field.
fn mps_number(x: f64) -> String {
    let plain = format!("{x}");
    if plain.len() <= 12 {
        return plain;
    }
    for prec in (1..=11).rev() {
        let fixed = format!("{x:.prec$}");
        let fixed = fixed.trim_end_matches('0').trim_end_matches('.').to_string();
        if fixed.len() <= 12 && fixed.parse::<f64>().map_or(false, |v| v != 0.0 || x == 0.0) {
            return fixed;
        }
        let sci = format!("{x:.prec$e}");
        if sci.len() <= 12 {
            return sci;
        }
    }
    format!("{x:.0e}")
}

fn col_name(i: usize) -> String {
    format!("C{:07}", i + 1)
}

fn row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

/// Fixed-format MPS with generated 8-character names; the real names are
/// listed in comment lines.
pub fn write_mps(m: &MilpModel) -> Result<String> {
    m.validate()?;
    let mut s = String::new();
    writeln!(s, "* formulation {} instance {}", m.formulation, m.instance_hash).unwrap();
    for note in &m.notes {
        writeln!(s, "* note {note}").unwrap();
    }
    for (i, v) in m.variables.iter().enumerate() {
        writeln!(s, "* column {} {}", col_name(i), v.name).unwrap();
    }
    for (i, c) in m.constraints.iter().enumerate() {
        writeln!(s, "* row {} {}", row_name(i), c.name).unwrap();
    }
    writeln!(s, "NAME          FTTNP").unwrap();
    writeln!(s, "ROWS").unwrap();
    writeln!(s, " N  OBJ").unwrap();
    for (i, c) in m.constraints.iter().enumerate() {
        let t = match c.sense {
            Sense::Le => "L",
            Sense::Eq => "E",
            Sense::Ge => "G",
        };
        writeln!(s, " {t}  {}", row_name(i)).unwrap();
    }
    // column-major coefficients
    let mut by_col: Vec<Vec<(String, f64)>> = vec![Vec::new(); m.variables.len()];
    for &(v, a) in &m.objective {
        by_col[v].push(("OBJ".into(), a));
    }
    for (i, c) in m.constraints.iter().enumerate() {
        for &(v, a) in &c.terms {
            by_col[v].push((row_name(i), a));
        }
    }
    writeln!(s, "COLUMNS").unwrap();
    let mut in_int = false;
    let mut markers = 0;
    for (i, v) in m.variables.iter().enumerate() {
        let int = v.kind == VarKind::Binary;
        if int != in_int {
            let tag = if int { "'INTORG'" } else { "'INTEND'" };
            writeln!(s, "    MARKER{markers:<4}'MARKER'                 {tag}").unwrap();
            markers += 1;
            in_int = int;
        }
        let entries = if by_col[i].is_empty() { vec![("OBJ".to_string(), 0.0)] } else { by_col[i].clone() };
        for chunk in entries.chunks(2) {
            let mut line = format!("    {:<8}  {:<8}  {:>12}", col_name(i), chunk[0].0, mps_number(chunk[0].1));
            if let Some((r, a)) = chunk.get(1) {
                write!(line, "   {:<8}  {:>12}", r, mps_number(*a)).unwrap();
            }
            writeln!(s, "{line}").unwrap();
        }
    }
    if in_int {
        writeln!(s, "    MARKER{markers:<4}'MARKER'                 'INTEND'").unwrap();
    }
    writeln!(s, "RHS").unwrap();
    for (i, c) in m.constraints.iter().enumerate() {
        if c.rhs != 0.0 {
            writeln!(s, "    RHS       {:<8}  {:>12}", row_name(i), mps_number(c.rhs)).unwrap();
        }
    }
    writeln!(s, "BOUNDS").unwrap();
    for (i, v) in m.variables.iter().enumerate() {
        let c = col_name(i);
        let mut bound = |t: &str, x: Option<f64>| match x {
            Some(x) => writeln!(s, " {t} BND       {c:<8}  {:>12}", mps_number(x)).unwrap(),
            None => writeln!(s, " {t} BND       {c}").unwrap(),
        };
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            bound("BV", None);
        } else if v.lower == v.upper {
            bound("FX", Some(v.lower));
        } else {
            if v.lower == f64::NEG_INFINITY {
                bound("MI", None);
            } else if v.lower != 0.0 {
                bound("LO", Some(v.lower));
            }
            if v.upper.is_finite() {
                bound("UP", Some(v.upper));
            } else if v.kind == VarKind::Binary {
                bound("UP", Some(1.0));
            }
        }
    }
    writeln!(s, "ENDATA").unwrap();
    Ok(s)
}

fn lp_terms(out: &mut String, terms: &[(usize, f64)], m: &MilpModel, indent: &str) {
    let mut line = String::new();
    for &(v, a) in terms {
        let sign = if a < 0.0 { '-' } else { '+' };
        let tok = format!(" {sign} {} {}", a.abs(), m.variables[v].name);
        if line.len() + tok.len() > 200 {
            writeln!(out, "{line}").unwrap();
            line = indent.to_string();
        }
        line.push_str(&tok);
    }
    out.push_str(&line);
}

/// LP file with full names.
pub fn write_lp(m: &MilpModel) -> Result<String> {
    m.validate()?;
    let mut s = String::new();
    writeln!(s, "\\ formulation {} instance {}", m.formulation, m.instance_hash).unwrap();
    for note in &m.notes {
        writeln!(s, "\\ note {note}").unwrap();
    }
    writeln!(s, "Minimize").unwrap();
    s.push_str(" obj:");
    if m.objective.is_empty() {
        lp_terms(&mut s, &[(0, 0.0)], m, "     ");
    } else {
        lp_terms(&mut s, &m.objective, m, "     ");
    }
    s.push('\n');
    writeln!(s, "Subject To").unwrap();
    for c in &m.constraints {
        write!(s, " {}:", c.name).unwrap();
        if c.terms.is_empty() {
            lp_terms(&mut s, &[(0, 0.0)], m, "   ");
        } else {
            lp_terms(&mut s, &c.terms, m, "   ");
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        writeln!(s, " {op} {}", c.rhs).unwrap();
    }
    writeln!(s, "Bounds").unwrap();
    for v in &m.variables {
        let binary_default = v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0;
        if binary_default {
            continue;
        }
        if v.lower == v.upper {
            writeln!(s, " {} = {}", v.name, v.lower).unwrap();
        } else if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            writeln!(s, " {} free", v.name).unwrap();
        } else {
            let lo = if v.lower == f64::NEG_INFINITY { "-inf".to_string() } else { v.lower.to_string() };
            let hi = if v.upper == f64::INFINITY { "+inf".to_string() } else { v.upper.to_string() };
            writeln!(s, " {lo} <= {} <= {hi}", v.name).unwrap();
        }
    }
    let bins: Vec<&str> = m
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        writeln!(s, "Binaries").unwrap();
        for chunk in bins.chunks(8) {
            writeln!(s, " {}", chunk.join(" ")).unwrap();
        }
    }
    writeln!(s, "End").unwrap();
    Ok(s)
}

pub fn export_model(m: &MilpModel, format: ModelFormat, path: &Path) -> Result<()> {
    let text = match format {
        ModelFormat::Mps => write_mps(m)?,
        ModelFormat::Lp => write_lp(m)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    match tok {
        "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
        "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
        _ => tok
            .parse()
            .map_err(|_| Error::Input(format!("line {line}: bad number {tok:?}"))),
    }
}

/// Read back a file written by [`write_mps`]. Real names are restored from
/// the comment map when present.
pub fn parse_mps(text: &str) -> Result<MilpModel> {
    let mut m = MilpModel::new("", "");
    let mut real: HashMap<String, String> = HashMap::new();
    let mut rows: HashMap<String, usize> = HashMap::new();
    let mut section = "";
    let mut integer = false;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let tok: Vec<&str> = raw.split_whitespace().collect();
        if tok.is_empty() {
            continue;
        }
        if raw.starts_with('*') {
            match tok.get(1).copied() {
                Some("column") | Some("row") if tok.len() >= 4 => {
                    real.insert(tok[2].to_string(), tok[3].to_string());
                }
                Some("formulation") if tok.len() >= 5 => {
                    m.formulation = tok[2].to_string();
                    m.instance_hash = tok[4].to_string();
                }
                Some("note") => m.notes.push(tok[2..].join(" ")),
                _ => {}
            }
            continue;
        }
        if !raw.starts_with(' ') {
            section = match tok[0] {
                "NAME" | "ROWS" | "COLUMNS" | "RHS" | "BOUNDS" | "RANGES" | "ENDATA" => tok[0],
                other => return Err(Error::Input(format!("line {ln}: unknown section {other}"))),
            };
            continue;
        }
        let name_of = |s: &str| real.get(s).cloned().unwrap_or_else(|| s.to_string());
        match section {
            "ROWS" => {
                let sense = match tok[0] {
                    "N" => continue,
                    "L" => Sense::Le,
                    "E" => Sense::Eq,
                    "G" => Sense::Ge,
                    t => return Err(Error::Input(format!("line {ln}: row type {t}"))),
                };
                rows.insert(tok[1].to_string(), m.constraints.len());
                m.add_row(name_of(tok[1]), Vec::new(), sense, 0.0);
            }
            "COLUMNS" => {
                if tok.len() >= 3 && tok[1] == "'MARKER'" {
                    integer = tok[2] == "'INTORG'";
                    continue;
                }
                let col = name_of(tok[0]);
                let v = match m.var(&col) {
                    Some(v) => v,
                    None => {
                        let kind = if integer { VarKind::Binary } else { VarKind::Continuous };
                        let upper = if integer { 1.0 } else { f64::INFINITY };
                        m.add_var(col, kind, 0.0, upper)
                    }
                };
                for pair in tok[1..].chunks(2) {
                    let [r, a] = pair else {
                        return Err(Error::Input(format!("line {ln}: dangling column entry")));
                    };
                    let a = parse_num(a, ln)?;
                    if *r == "OBJ" {
                        if a != 0.0 {
                            m.objective.push((v, a));
                        }
                    } else {
                        let &i = rows.get(*r).ok_or_else(|| Error::Input(format!("line {ln}: unknown row {r}")))?;
                        m.constraints[i].terms.push((v, a));
                    }
                }
            }
            "RHS" => {
                for pair in tok[1..].chunks(2) {
                    let [r, a] = pair else {
                        return Err(Error::Input(format!("line {ln}: dangling rhs entry")));
                    };
                    let &i = rows.get(*r).ok_or_else(|| Error::Input(format!("line {ln}: unknown row {r}")))?;
                    m.constraints[i].rhs = parse_num(a, ln)?;
                }
            }
            "BOUNDS" => {
                let col = name_of(tok.get(2).ok_or_else(|| Error::Input(format!("line {ln}: short bound")))?);
                let v = m.var(&col).ok_or_else(|| Error::Input(format!("line {ln}: unknown column {col}")))?;
                let value = tok.get(3).map(|t| parse_num(t, ln)).transpose()?;
                let var = &mut m.variables[v];
                match tok[0] {
                    "BV" => {
                        var.kind = VarKind::Binary;
                        var.lower = 0.0;
                        var.upper = 1.0;
                    }
                    "FX" => {
                        let x = value.ok_or_else(|| Error::Input(format!("line {ln}: FX needs a value")))?;
                        var.lower = x;
                        var.upper = x;
                    }
                    "LO" => var.lower = value.unwrap_or(0.0),
                    "UP" => var.upper = value.unwrap_or(f64::INFINITY),
                    "MI" => var.lower = f64::NEG_INFINITY,
                    "FR" => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    t => return Err(Error::Input(format!("line {ln}: bound type {t}"))),
                }
            }
            "RANGES" => return Err(Error::Unsupported("MPS RANGES section".into())),
            _ => return Err(Error::Input(format!("line {ln}: data outside a section"))),
        }
    }
    Ok(m)
}

/// Read back a file written by [`write_lp`].
pub fn parse_lp(text: &str) -> Result<MilpModel> {
    let mut m = MilpModel::new("", "");
    let mut section = "";
    // logical statements: continuation lines start with whitespace and no label
    let mut statements: Vec<(String, String)> = Vec::new();
    for raw in text.lines() {
        if let Some(rest) = raw.strip_prefix('\\') {
            let tok: Vec<&str> = rest.split_whitespace().collect();
            match tok.first().copied() {
                Some("formulation") if tok.len() >= 4 => {
                    m.formulation = tok[1].to_string();
                    m.instance_hash = tok[3].to_string();
                }
                Some("note") => m.notes.push(tok[1..].join(" ")),
                _ => {}
            }
            continue;
        }
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        match t {
            "Minimize" | "Subject To" | "Bounds" | "Binaries" | "End" => {
                section = match t {
                    "Minimize" => "min",
                    "Subject To" => "st",
                    "Bounds" => "bounds",
                    "Binaries" => "bin",
                    _ => "end",
                };
                continue;
            }
            _ => {}
        }
        let continues = matches!(section, "min" | "st") && !t.contains(':');
        match statements.last_mut() {
            Some(last) if continues && last.0 == section => {
                last.1.push(' ');
                last.1.push_str(t);
            }
            _ => statements.push((section.to_string(), t.to_string())),
        }
    }
    let mut var_of = |m: &mut MilpModel, name: &str| -> usize {
        m.var(name)
            .unwrap_or_else(|| m.add_var(name, VarKind::Continuous, 0.0, f64::INFINITY))
    };
    let parse_terms = |m: &mut MilpModel, body: &str, var_of: &mut dyn FnMut(&mut MilpModel, &str) -> usize| -> Result<Vec<(usize, f64)>> {
        let tok: Vec<&str> = body.split_whitespace().collect();
        let mut terms = Vec::new();
        for chunk in tok.chunks(3) {
            let [sign, a, name] = chunk else {
                return Err(Error::Input(format!("malformed term list {body:?}")));
            };
            let mut a: f64 = parse_num(a, 0)?;
            if *sign == "-" {
                a = -a;
            }
            let v = var_of(m, name);
            terms.push((v, a));
        }
        Ok(terms)
    };
    for (sec, body) in statements {
        match sec.as_str() {
            "min" => {
                let rest = body.split_once(':').map_or(body.as_str(), |p| p.1);
                m.objective = parse_terms(&mut m, rest, &mut var_of)?.into_iter().filter(|t| t.1 != 0.0).collect();
            }
            "st" => {
                let (name, rest) = body
                    .split_once(':')
                    .ok_or_else(|| Error::Input(format!("unnamed row {body:?}")))?;
                let (lhs, sense, rhs) = ["<=", ">=", "="]
                    .iter()
                    .find_map(|op| rest.rsplit_once(op).map(|(l, r)| (l, *op, r)))
                    .ok_or_else(|| Error::Input(format!("row {name} has no sense")))?;
                let sense = match sense {
                    "<=" => Sense::Le,
                    ">=" => Sense::Ge,
                    _ => Sense::Eq,
                };
                let terms = parse_terms(&mut m, lhs, &mut var_of)?.into_iter().filter(|t| t.1 != 0.0).collect();
                let rhs = parse_num(rhs.trim(), 0)?;
                m.add_row(name.trim(), terms, sense, rhs);
            }
            "bounds" => {
                let tok: Vec<&str> = body.split_whitespace().collect();
                match tok.as_slice() {
                    [name, "free"] => {
                        let v = var_of(&mut m, name);
                        m.variables[v].lower = f64::NEG_INFINITY;
                        m.variables[v].upper = f64::INFINITY;
                    }
                    [name, "=", x] => {
                        let v = var_of(&mut m, name);
                        let x = parse_num(x, 0)?;
                        m.variables[v].lower = x;
                        m.variables[v].upper = x;
                    }
                    [lo, "<=", name, "<=", hi] => {
                        let v = var_of(&mut m, name);
                        m.variables[v].lower = parse_num(lo, 0)?;
                        m.variables[v].upper = parse_num(hi, 0)?;
                    }
                    _ => return Err(Error::Input(format!("bound line {body:?}"))),
                }
            }
            "bin" => {
                for name in body.split_whitespace() {
                    let v = var_of(&mut m, name);
                    let var = &mut m.variables[v];
                    var.kind = VarKind::Binary;
                    if var.upper == f64::INFINITY {
                        var.upper = 1.0;
                    }
                }
            }
            _ => return Err(Error::Input(format!("text outside a section: {body:?}"))),
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSolution {
    pub objective: f64,
    /// By model variable name; absent variables are zero.
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExternalOutcome {
    Solved(ExternalSolution),
    Unavailable(String),
}

/// Environment variable holding the default command template.
pub const SOLVER_ENV: &str = "FTTNP_SOLVER_CMD";

/// Write the model as MPS, run `command` (placeholders `{model}` and
/// `{solution}`; falls back to `FTTNP_SOLVER_CMD`) and parse the solution
/// file. A missing program or template yields `Unavailable`.
pub fn run_external(m: &MilpModel, command: Option<&str>) -> Result<ExternalOutcome> {
    let template = match command.map(str::to_string).or_else(|| std::env::var(SOLVER_ENV).ok()) {
        Some(t) if !t.trim().is_empty() => t,
        _ => return Ok(ExternalOutcome::Unavailable(format!("no solver command and {SOLVER_ENV} unset"))),
    };
    let dir = scratch_dir()?;
    let model_path = dir.join("model.mps");
    let sol_path = dir.join("model.sol");
    export_model(m, ModelFormat::Mps, &model_path)?;
    let words: Vec<String> = template
        .split_whitespace()
        .map(|w| {
            w.replace("{model}", &model_path.to_string_lossy())
                .replace("{solution}", &sol_path.to_string_lossy())
        })
        .collect();
    let output = match Command::new(&words[0]).args(&words[1..]).output() {
        Ok(o) => o,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let _ = std::fs::remove_dir_all(&dir);
            return Ok(ExternalOutcome::Unavailable(format!("solver program {} not found", words[0])));
        }
        Err(e) => return Err(Error::Adapter(format!("could not start {}: {e}", words[0]))),
    };
    if !output.status.success() {
        let _ = std::fs::remove_dir_all(&dir);
        return Err(Error::Adapter(format!(
            "solver exited with {}: {}{}",
            output.status,
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        )));
    }
    let text = std::fs::read_to_string(&sol_path).map_err(|e| Error::Adapter(format!("no solution file: {e}")));
    let _ = std::fs::remove_dir_all(&dir);
    parse_solution(m, &text?).map(ExternalOutcome::Solved)
}

fn scratch_dir() -> Result<PathBuf> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "fttnp-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// `name value` lines plus `objective <value>` and an optional `status`.
/// Generated MPS column names are mapped back to model names.
pub fn parse_solution(m: &MilpModel, text: &str) -> Result<ExternalSolution> {
    let mut objective = None;
    let mut values = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let tok: Vec<&str> = raw.split_whitespace().collect();
        if tok.is_empty() || tok[0].starts_with('#') {
            continue;
        }
        let bad = || Error::Adapter(format!("solution line {}: cannot parse {raw:?}", ln + 1));
        if tok.len() != 2 {
            return Err(bad());
        }
        match tok[0].to_ascii_lowercase().as_str() {
            "status" => {
                if !tok[1].eq_ignore_ascii_case("optimal") {
                    return Err(Error::Adapter(format!("solver status {}", tok[1])));
                }
            }
            "objective" => objective = Some(tok[1].parse::<f64>().map_err(|_| bad())?),
            _ => {
                let value: f64 = tok[1].parse().map_err(|_| bad())?;
                let name = match m.var(tok[0]) {
                    Some(_) => tok[0].to_string(),
                    None => short_column(m, tok[0]).ok_or_else(|| {
                        Error::Adapter(format!("solution names unknown variable {}", tok[0]))
                    })?,
                };
                values.insert(name, value);
            }
        }
    }
    let objective = match objective {
        Some(o) => o,
        None => m
            .objective
            .iter()
            .map(|&(v, a)| a * values.get(&m.variables[v].name).copied().unwrap_or(0.0))
            .sum(),
    };
    Ok(ExternalSolution { objective, values })
}

fn short_column(m: &MilpModel, s: &str) -> Option<String> {
    let idx: usize = s.strip_prefix('C')?.parse().ok()?;
    m.variables.get(idx.checked_sub(1)?).map(|v| v.name.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub feasible: bool,
    pub objective: f64,
    /// Names of violated rows, bounds and integrality conditions.
    pub violations: Vec<String>,
    pub max_violation: f64,
}

/// Check every row, bound and integrality condition within `1e-6`.
pub fn verify_solution(m: &MilpModel, values: &BTreeMap<String, f64>) -> Result<Verification> {
    const TOL: f64 = 1e-6;
    let x: Vec<f64> = m
        .variables
        .iter()
        .map(|v| {
            values
                .get(&v.name)
                .copied()
                .ok_or_else(|| Error::Input(format!("no value for variable {}", v.name)))
        })
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    let mut note = |name: &str, amount: f64| {
        worst = worst.max(amount);
        if amount > TOL {
            violations.push(name.to_string());
        }
    };
    for (v, &val) in m.variables.iter().zip(&x) {
        note(&v.name, (v.lower - val).max(val - v.upper).max(0.0));
        if v.kind == VarKind::Binary {
            note(&format!("{} integrality", v.name), (val - val.round()).abs());
        }
    }
    for c in &m.constraints {
        let lhs = MilpModel::evaluate(&c.terms, &x);
        let gap = match c.sense {
            Sense::Le => lhs - c.rhs,
            Sense::Ge => c.rhs - lhs,
            Sense::Eq => (lhs - c.rhs).abs(),
        };
        note(&c.name, gap.max(0.0));
    }
    Ok(Verification {
        feasible: violations.is_empty(),
        objective: MilpModel::evaluate(&m.objective, &x),
        violations,
        max_violation: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{candidate_sets, GraphEdge};
    use crate::model::{AxisBox, Neighborhood, Point, RootedTopology};

    fn fig3(metric: Metric) -> Instance {
        let b = |x: f64, y: f64| Neighborhood::single(AxisBox::new([x, y], [x + 1., y + 1.]));
        Instance::new(
            RootedTopology::from_parents(&[0, 0, 0, 3, 3]).unwrap(),
            vec![b(0., 5.), b(-3., 2.), b(3., 2.), b(0., 2.), b(-1., 0.), b(1., 0.)],
            metric,
        )
        .unwrap()
    }

    #[test]
    fn fig3_counts() {
        let m = build_continuous_l1_milp(&fig3(Metric::L1), ContinuousVariant::Flow).unwrap();
        assert_eq!(m.count_prefix("y_"), 13);
        assert_eq!(m.count_prefix("f_"), 52);
        let p = build_continuous_l1_milp(&fig3(Metric::L1), ContinuousVariant::Projected).unwrap();
        assert_eq!(p.count_prefix("f_"), 0);
        assert_eq!(p.binary_count(), 13);
        assert!(matches!(
            build_continuous_l1_milp(&fig3(Metric::L2), ContinuousVariant::Flow),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn disjunction_binaries() {
        let inst = Instance::new(
            RootedTopology::from_parents(&[0]).unwrap(),
            vec![
                Neighborhood::new(vec![AxisBox::new([0., 0.], [1., 1.]), AxisBox::new([5., 5.], [6., 6.])]),
                Neighborhood::single(AxisBox::new([2., 2.], [3., 3.])),
            ],
            Metric::L1,
        )
        .unwrap();
        let m = build_continuous_l1_milp(&inst, ContinuousVariant::Projected).unwrap();
        assert_eq!(m.count_prefix("z_"), 2);
        assert_eq!(m.constraints.iter().filter(|c| c.name.starts_with("pick_")).count(), 1);
    }

    fn grid3() -> GeoGraph {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                nodes.push(Point::from([x as f64, y as f64]));
                let i = y * 3 + x;
                if x < 2 {
                    edges.push(GraphEdge { a: i, b: i + 1, weight: 1.0 });
                }
                if y < 2 {
                    edges.push(GraphEdge { a: i, b: i + 3, weight: 1.0 });
                }
            }
        }
        GeoGraph::new(nodes, edges).unwrap()
    }

    fn star_on_grid() -> (Instance, GeoGraph, CandidateSets) {
        let p = |x: f64, y: f64| Neighborhood::single(AxisBox::new([x, y], [x, y]));
        let inst = Instance::new(
            RootedTopology::from_parents(&[0, 0]).unwrap(),
            vec![p(0., 0.), p(2., 2.), p(2., 0.)],
            Metric::L1,
        )
        .unwrap();
        let g = grid3();
        let c = candidate_sets(&inst, &g).unwrap();
        (inst, g, c)
    }

    #[test]
    fn discrete_counts() {
        let (inst, g, c) = star_on_grid();
        let m = build_discrete_milp(&inst, &g, &c, None).unwrap();
        assert_eq!(m.count_prefix("q_"), 12);
        assert_eq!(m.count_prefix("f_"), 48);
        assert!(m.variables.iter().filter(|v| v.name.starts_with("t_")).all(|v| v.lower == 1.0));
    }

    #[test]
    fn mps_round_trip() {
        let (inst, g, c) = star_on_grid();
        let m = build_discrete_milp(&inst, &g, &c, None).unwrap();
        let text = write_mps(&m).unwrap();
        assert!(text.contains(" BV BND"));
        assert_eq!(write_mps(&m).unwrap(), text);
        let back = parse_mps(&text).unwrap();
        assert_eq!(back.variables.len(), m.variables.len());
        assert_eq!(back.constraints.len(), m.constraints.len());
        assert_eq!(back.variables, m.variables);
        let sorted = |m: &MilpModel| -> Vec<Constraint> {
            m.constraints
                .iter()
                .map(|c| {
                    let mut c = c.clone();
                    c.terms.sort_by_key(|t| t.0);
                    c
                })
                .collect()
        };
        assert_eq!(sorted(&back), sorted(&m));
        assert_eq!(back.formulation, "disc");

        let cm = build_continuous_l1_milp(&fig3(Metric::L1), ContinuousVariant::Flow).unwrap();
        let back = parse_mps(&write_mps(&cm).unwrap()).unwrap();
        assert_eq!(back.variables.len(), cm.variables.len());
        assert_eq!(back.constraints.len(), cm.constraints.len());
    }

    #[test]
    fn lp_round_trip() {
        let cm = build_continuous_l1_milp(&fig3(Metric::L1), ContinuousVariant::Projected).unwrap();
        let text = write_lp(&cm).unwrap();
        let back = parse_lp(&text).unwrap();
        assert_eq!(back.variables.len(), cm.variables.len());
        assert_eq!(back.constraints.len(), cm.constraints.len());
        assert_eq!(back.binary_count(), cm.binary_count());
    }

    #[test]
    fn empty_model_rejected() {
        let mut m = MilpModel::new("x", "0");
        m.add_var("a", VarKind::Continuous, 0.0, 1.0);
        assert!(write_mps(&m).is_err());
        assert!(write_lp(&m).is_err());
    }

    #[test]
    fn number_field() {
        assert_eq!(mps_number(1.0), "1");
        assert_eq!(mps_number(-0.25), "-0.25");
        let third = mps_number(1.0 / 3.0);
        assert!(third.len() <= 12);
        assert!((third.parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-10);
        let big = mps_number(123456789012345.0);
        assert!(big.len() <= 12);
        assert!((big.parse::<f64>().unwrap() / 123456789012345.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn verify_rows() {
        let mut m = MilpModel::new("x", "0");
        let a = m.add_var("a", VarKind::Binary, 0.0, 1.0);
        let b = m.add_var("b", VarKind::Binary, 0.0, 1.0);
        m.add_row("one", vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.0);
        m.objective = vec![(a, 2.0), (b, 3.0)];
        let vals = |x: f64, y: f64| BTreeMap::from([("a".to_string(), x), ("b".to_string(), y)]);
        let r = verify_solution(&m, &vals(0., 0.)).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.violations, vec!["one"]);
        let r = verify_solution(&m, &vals(1., 0.)).unwrap();
        assert!(r.feasible);
        assert_eq!(r.objective, 2.0);
        assert!(!verify_solution(&m, &vals(1.0 + 1e-3, 0.)).unwrap().feasible);
        let missing = BTreeMap::from([("a".to_string(), 1.0)]);
        assert!(matches!(verify_solution(&m, &missing), Err(Error::Input(_))));
    }

    #[test]
    fn adapter_contract() {
        let (inst, g, c) = star_on_grid();
        let m = build_discrete_milp(&inst, &g, &c, None).unwrap();
        let out = run_external(&m, Some("definitely-not-a-solver-binary {model} {solution}")).unwrap();
        assert!(matches!(out, ExternalOutcome::Unavailable(_)));
        assert!(matches!(parse_solution(&m, "objective nan?\n"), Err(Error::Adapter(_))));
        assert!(matches!(parse_solution(&m, "garbage line here\n"), Err(Error::Adapter(_))));
        assert!(matches!(parse_solution(&m, "status infeasible\n"), Err(Error::Adapter(_))));
        let s = parse_solution(&m, "objective 4\nC0000001 1\n").unwrap();
        assert_eq!(s.objective, 4.0);
        assert_eq!(s.values[&m.variables[0].name], 1.0);
    }
}
