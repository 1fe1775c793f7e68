//! Random instance generator, solve-mode dispatch and the experiment
//! harness (CSV records, time profiles, gap summary).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::continuous::{solve_continuous, solve_ftmstn_with, ContinuousOptions};
use crate::discrete::{solve_discrete, DiscreteOptions};
use crate::error::{Error, Result};
use crate::grid::{apply_fixing, build_grid, candidate_sets, family_windows, GridKind};
use crate::model::{parse_instance, AxisBox, Instance, Metric, Neighborhood, RootedTopology, Solution};

/// Side of the square holding every generated neighborhood.
pub const EXTENT: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenParams {
    pub n: usize,
    pub b: usize,
    pub s: f64,
    pub seed: u64,
    pub extent: f64,
}

impl GenParams {
    pub fn new(n: usize, b: usize, s: f64, seed: u64) -> Self {
        GenParams { n, b, s, seed, extent: EXTENT }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.b == 0 || !(self.s > 0.0) || !(self.extent >= self.s) {
            return Err(Error::Input(format!("invalid generator parameters {self:?}")));
        }
        Ok(())
    }

    pub fn file_name(&self) -> String {
        format!("n{}_b{}_s{}_seed{}.json", self.n, self.b, self.s, self.seed)
    }
}

/// The full sweep: n in {20,50,100,200}, b in 1..=5, s in {20,50,100,200}.
pub fn paper_sweep(seeds: u64) -> Vec<GenParams> {
    let mut out = Vec::new();
    for n in [20, 50, 100, 200] {
        for b in 1..=5 {
            for s in [20.0, 50.0, 100.0, 200.0] {
                for seed in 0..seeds {
                    out.push(GenParams::new(n, b, s, seed));
                }
            }
        }
    }
    out
}

/// Uniform labeled tree from a random Prüfer sequence, rooted at 0.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> RootedTopology {
    if n <= 2 {
        return RootedTopology::from_parents(&vec![0; n.saturating_sub(1)]).expect("trivial tree");
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &x in &seq {
        degree[x] += 1;
    }
    let mut adj = vec![Vec::new(); n];
    let mut leaves: std::collections::BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    for &x in &seq {
        let leaf = *leaves.iter().next().expect("a leaf exists");
        leaves.remove(&leaf);
        adj[leaf].push(x);
        adj[x].push(leaf);
        degree[x] -= 1;
        if degree[x] == 1 {
            leaves.insert(x);
        }
    }
    let rest: Vec<usize> = leaves.into_iter().collect();
    adj[rest[0]].push(rest[1]);
    adj[rest[1]].push(rest[0]);

    let mut parent = vec![usize::MAX; n];
    parent[0] = 0;
    let mut stack = vec![0];
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if parent[w] == usize::MAX {
                parent[w] = v;
                stack.push(w);
            }
        }
    }
    RootedTopology::from_parents(&parent[1..]).expect("Prüfer decoding yields a tree")
}

/// One instance: `b` squares of side `s` per node, inside the extent.
pub fn gen_instance(p: &GenParams) -> Result<Instance> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ ((p.n as u64) << 40) ^ ((p.b as u64) << 32) ^ p.s.to_bits().rotate_left(17));
    let topology = random_tree(p.n, &mut rng);
    let neighborhoods = (0..p.n)
        .map(|_| {
            Neighborhood::new(
                (0..p.b)
                    .map(|_| {
                        let x = rng.gen_range(0.0..=p.extent - p.s);
                        let y = rng.gen_range(0.0..=p.extent - p.s);
                        AxisBox::new([x, y], [x + p.s, y + p.s])
                    })
                    .collect(),
            )
        })
        .collect();
    Instance::new(topology, neighborhoods, Metric::L2)
}

/// Write one file per parameter set; returns the paths in input order.
pub fn gen_instances(params: &[GenParams], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    params
        .iter()
        .map(|p| {
            let path = dir.join(p.file_name());
            let inst = gen_instance(p)?;
            std::fs::write(&path, inst.to_json()).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Percentage gap of the discrete optimum over the continuous `L1` one.
pub fn deviation(disc: f64, cont_l1: f64) -> Result<f64> {
    if disc == 0.0 {
        return if cont_l1 == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Input(format!("deviation undefined: discrete 0, continuous {cont_l1}")))
        };
    }
    Ok((disc - cont_l1) / disc * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    ContL1,
    ContL2,
    Disc,
    Ftmstn,
}

impl SolveMode {
    pub const ALL: [SolveMode; 4] = [SolveMode::ContL1, SolveMode::ContL2, SolveMode::Disc, SolveMode::Ftmstn];

    pub fn name(self) -> &'static str {
        match self {
            SolveMode::ContL1 => "cont-l1",
            SolveMode::ContL2 => "cont-l2",
            SolveMode::Disc => "disc",
            SolveMode::Ftmstn => "ftmstn",
        }
    }
}

impl FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolveMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown mode {s:?}; expected cont-l1, cont-l2, disc or ftmstn")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModeOptions {
    pub grid: GridKind,
    pub step: f64,
    pub budget: u64,
    /// Apply the family-window reduction in discrete mode.
    pub fixing: bool,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions {
            grid: GridKind::Hanan,
            step: 1.0,
            budget: ContinuousOptions::default().budget,
            fixing: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeRun {
    pub solution: Solution,
    /// Graph size in discrete mode, solution size otherwise.
    pub nodes: usize,
    pub edges: usize,
    pub reduction_pct: Option<f64>,
    pub warnings: Vec<String>,
}

/// Solve with one mode. The continuous modes set their metric; discrete
/// and baseline modes keep the instance's.
pub fn solve_mode(inst: &Instance, mode: SolveMode, opts: &ModeOptions) -> Result<ModeRun> {
    let copts = ContinuousOptions {
        budget: opts.budget,
        ..ContinuousOptions::default()
    };
    let wrap = |solution: Solution| ModeRun {
        nodes: solution.positions.len(),
        edges: solution.edges.len(),
        solution,
        reduction_pct: None,
        warnings: Vec::new(),
    };
    match mode {
        SolveMode::ContL1 => solve_continuous(&inst.with_metric(Metric::L1), &copts).map(wrap),
        SolveMode::ContL2 => solve_continuous(&inst.with_metric(Metric::L2), &copts).map(wrap),
        SolveMode::Ftmstn => solve_ftmstn_with(inst, &copts).map(wrap),
        SolveMode::Disc => {
            let g = build_grid(inst, opts.grid, opts.step, &[])?;
            let cands = candidate_sets(inst, &g)?;
            let fix = opts.fixing.then(|| apply_fixing(&g, inst, &cands, &family_windows(inst)));
            let solution = solve_discrete(inst, &g, &cands, fix.as_ref(), &DiscreteOptions::default())?;
            Ok(ModeRun {
                nodes: g.node_count(),
                edges: g.edge_count(),
                solution,
                reduction_pct: fix.as_ref().map(|f| f.reduction_pct()),
                warnings: fix.map(|f| f.warnings).unwrap_or_default(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub instance: String,
    pub mode: String,
    pub objective: f64,
    pub lower_bound: f64,
    /// `exact`, `heuristic`, `infeasible` or `error`.
    pub status: String,
    pub time_s: f64,
    pub nodes: usize,
    pub edges: usize,
    pub search_nodes: u64,
    pub reduction_pct: Option<f64>,
    pub dev_pct: Option<f64>,
    pub error: Option<String>,
}

impl BenchRecord {
    /// `(objective - lower bound) / objective` for unproven records.
    pub fn gap(&self) -> Option<f64> {
        (self.status == "heuristic" && self.objective > 0.0).then(|| (self.objective - self.lower_bound) / self.objective)
    }
}

pub const CSV_HEADER: &str = "instance,mode,objective,lower_bound,status,time_s,nodes,edges,reduction_pct,dev_pct";

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{:.3},{},{},{},{}",
            r.instance,
            r.mode,
            csv_num(r.objective),
            csv_num(r.lower_bound),
            r.status,
            r.time_s,
            r.nodes,
            r.edges,
            r.reduction_pct.map(csv_num).unwrap_or_default(),
            r.dev_pct.map(csv_num).unwrap_or_default(),
        )
        .unwrap();
    }
    s
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub budget: u64,
    pub workers: usize,
    pub fixing: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            budget: ContinuousOptions::default().budget,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            fixing: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub csv: String,
    pub profile: String,
}

fn run_one(id: &str, inst: &Instance, mode: SolveMode, opts: &BenchOptions) -> BenchRecord {
    let mopts = ModeOptions {
        budget: opts.budget,
        fixing: opts.fixing,
        ..ModeOptions::default()
    };
    // the discrete objective is compared against continuous L1
    let inst = if mode == SolveMode::Disc { inst.with_metric(Metric::L1) } else { inst.clone() };
    let start = Instant::now();
    let out = solve_mode(&inst, mode, &mopts);
    let time_s = start.elapsed().as_secs_f64();
    match out {
        Ok(run) => BenchRecord {
            instance: id.to_string(),
            mode: mode.name().to_string(),
            objective: run.solution.total_length,
            lower_bound: run.solution.lower_bound,
            status: run.solution.status.to_string(),
            time_s,
            nodes: run.nodes,
            edges: run.edges,
            search_nodes: run.solution.stats.search_nodes,
            reduction_pct: run.reduction_pct,
            dev_pct: None,
            error: None,
        },
        Err(e) => BenchRecord {
            instance: id.to_string(),
            mode: mode.name().to_string(),
            objective: f64::NAN,
            lower_bound: f64::NAN,
            status: "error".into(),
            time_s,
            nodes: 0,
            edges: 0,
            search_nodes: 0,
            reduction_pct: None,
            dev_pct: None,
            error: Some(e.to_string()),
        },
    }
}

/// Solve every `*.json` instance in `dir` with every mode. Records are
/// sorted by instance id, then mode order.
pub fn run_bench(dir: &Path, modes: &[SolveMode], opts: &BenchOptions) -> Result<BenchReport> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut instances = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| Error::io(f, e))?;
        let id = f.file_stem().unwrap_or_default().to_string_lossy().to_string();
        instances.push((id, parse_instance(&text)));
    }
    let jobs: Vec<(usize, SolveMode)> = (0..instances.len()).flat_map(|i| modes.iter().map(move |&m| (i, m))).collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, BenchRecord)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..opts.workers.max(1) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, mode)) = jobs.get(j) else { break };
                let (id, parsed) = &instances[i];
                let rec = match parsed {
                    Ok(inst) => run_one(id, inst, mode, opts),
                    Err(e) => BenchRecord {
                        instance: id.clone(),
                        mode: mode.name().into(),
                        objective: f64::NAN,
                        lower_bound: f64::NAN,
                        status: "error".into(),
                        time_s: 0.0,
                        nodes: 0,
                        edges: 0,
                        search_nodes: 0,
                        reduction_pct: None,
                        dev_pct: None,
                        error: Some(e.to_string()),
                    },
                };
                results.lock().unwrap().push((j, rec));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|r| r.0);
    let mut records: Vec<BenchRecord> = results.into_iter().map(|r| r.1).collect();
    attach_deviation(&mut records);
    Ok(BenchReport {
        csv: to_csv(&records),
        profile: summary(&records, modes),
        records,
    })
}

fn attach_deviation(records: &mut [BenchRecord]) {
    let cont: std::collections::HashMap<String, f64> = records
        .iter()
        .filter(|r| r.mode == "cont-l1" && r.status == "exact")
        .map(|r| (r.instance.clone(), r.objective))
        .collect();
    for r in records.iter_mut().filter(|r| r.mode == "disc" && r.status == "exact") {
        if let Some(&c) = cont.get(&r.instance) {
            r.dev_pct = deviation(r.objective, c).ok();
        }
    }
}

/// Share of instances solved to proven optimality within `t` seconds.
pub fn profile_point(records: &[BenchRecord], mode: &str, t: f64) -> f64 {
    let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.mode == mode).collect();
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().filter(|r| r.status == "exact" && r.time_s <= t).count() as f64 / rows.len() as f64
}

/// Time profile per mode plus mean gap of unproven records.
pub fn summary(records: &[BenchRecord], modes: &[SolveMode]) -> String {
    let max_t = records.iter().map(|r| r.time_s).fold(0.0f64, f64::max);
    let mut thresholds: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0].into_iter().filter(|&t| t < max_t).collect();
    thresholds.push(max_t);
    let mut s = String::from("time_s");
    for m in modes {
        write!(s, "\t{}", m.name()).unwrap();
    }
    s.push('\n');
    for &t in &thresholds {
        write!(s, "{t:.3}").unwrap();
        for m in modes {
            write!(s, "\t{:.3}", profile_point(records, m.name(), t)).unwrap();
        }
        s.push('\n');
    }
    s.push_str("mode\tunproven\tmean_gap\n");
    for m in modes {
        let gaps: Vec<f64> = records.iter().filter(|r| r.mode == m.name()).filter_map(BenchRecord::gap).collect();
        let mean = if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
        writeln!(s, "{}\t{}\t{mean:.6}", m.name(), gaps.len()).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deviation_formula() {
        assert_eq!(deviation(100.0, 98.0).unwrap(), 2.0);
        assert_eq!(deviation(7.5, 7.5).unwrap(), 0.0);
        assert_eq!(deviation(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(deviation(0.0, 0.0).unwrap(), 0.0);
        assert!(deviation(0.0, 1.0).is_err());
    }

    #[test]
    fn three_node_shapes() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tree(3, &mut rng);
            let root_kids = t.children(0).len();
            // path through the root's single child, or a star at the root
            assert!(root_kids == 2 || (root_kids == 1 && t.children(t.children(0)[0]).len() == 1));
        }
    }

    #[test]
    fn prufer_is_uniform_on_four_nodes() {
        // 4^2 = 16 labeled trees, each equally likely
        let mut counts = std::collections::HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..16000 {
            let t = random_tree(4, &mut rng);
            let mut edges: Vec<(usize, usize)> = t.arcs().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
            edges.sort();
            *counts.entry(edges).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 16);
        assert!(counts.values().all(|&c| (800..1200).contains(&c)));
    }

    #[test]
    fn generator_contract() {
        let p = GenParams::new(20, 3, 50.0, 4);
        let a = gen_instance(&p).unwrap();
        assert_eq!(a.to_json(), gen_instance(&p).unwrap().to_json());
        assert_ne!(a.to_json(), gen_instance(&GenParams::new(20, 3, 50.0, 5)).unwrap().to_json());
        assert_eq!(a.node_count(), 20);
        for nb in &a.neighborhoods {
            assert_eq!(nb.components.len(), 3);
            for b in &nb.components {
                for k in 0..2 {
                    assert!(b.lo.0[k] >= 0.0 && b.hi.0[k] <= EXTENT);
                    assert!((b.hi.0[k] - b.lo.0[k] - 50.0).abs() < 1e-9);
                }
            }
        }
        assert_eq!(paper_sweep(5).len(), 400);
    }

    #[test]
    fn csv_shape() {
        let r = BenchRecord {
            instance: "a".into(),
            mode: "disc".into(),
            objective: 3.0,
            lower_bound: 3.0,
            status: "exact".into(),
            time_s: 0.0123,
            nodes: 9,
            edges: 12,
            search_nodes: 1,
            reduction_pct: Some(25.0),
            dev_pct: Some(0.0),
            error: None,
        };
        let csv = to_csv(&[r.clone(), r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "a,disc,3,3,exact,0.012,9,12,25,0");
        assert_eq!(lines.len(), 3);
    }
}
