//! One PASS/FAIL/SKIP line per acceptance criterion.
//!
//! Runs without the libtest harness so the lines always show. Exits
//! nonzero when a criterion fails that is not listed in `KNOWN_RED`.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::{fig6, random_box, random_instance, toy};
use fttnp::bench::{deviation, gen_instance, gen_instances, paper_sweep, solve_mode, GenParams, ModeOptions, SolveMode};
use fttnp::continuous::{degree_check, solve_continuous, solve_ftmstn, ContinuousOptions};
use fttnp::discrete::{brute_force_oracle, solve_discrete, steiner_tree_dw, DiscreteOptions};
use fttnp::geometry::{solve_fixed_l2_with, FixedConfig, L2Options, NodeDomain};
use fttnp::grid::{apply_fixing, build_grid, candidate_sets, family_windows, GeoGraph, GraphEdge, GridKind};
use fttnp::milp::{build_continuous_l1_milp, build_discrete_milp, run_external, verify_solution, ContinuousVariant, ExternalOutcome};
use fttnp::{AxisBox, Instance, Metric, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria that fail for documented reasons (see README).
const KNOWN_RED: &[u32] = &[8];

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn disc_solve(inst: &Instance, g: &GeoGraph, fixing: bool) -> fttnp::Solution {
    let cands = candidate_sets(inst, g).unwrap();
    let fix = fixing.then(|| apply_fixing(g, inst, &cands, &family_windows(inst)));
    solve_discrete(inst, g, &cands, fix.as_ref(), &DiscreteOptions::default()).unwrap()
}

fn hanan_l1(inst: &Instance) -> f64 {
    let inst = inst.with_metric(Metric::L1);
    let g = build_grid(&inst, GridKind::Hanan, 0.0, &[]).unwrap();
    disc_solve(&inst, &g, true).total_length
}

fn c1_oracle() -> Verdict {
    let mut r = rng(1);
    let (mut count, mut bad) = (0, Vec::new());
    while count < 60 {
        let (w, h) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let n = r.gen_range(2..=4);
        let inst = random_instance(n, 2, w, h, 1, Metric::L1, &mut r);
        let g = build_grid(&inst, GridKind::Square, 1.0, &[]).unwrap();
        let cands = candidate_sets(&inst, &g).unwrap();
        // the oracle enumerates every edge subset per terminal tuple
        if g.edge_count() > 17 || cands.product() > 2000.0 {
            continue;
        }
        let want = brute_force_oracle(&inst, &g, &cands).unwrap().total_length;
        let got = solve_discrete(&inst, &g, &cands, None, &DiscreteOptions::default()).unwrap().total_length;
        if got != want {
            bad.push(format!("#{count}: {got} vs {want}"));
        }
        count += 1;
    }
    check(bad.is_empty(), format!("{count} instances on grids up to 4x4, mismatches {bad:?}"))
}

fn steiner_brute(g: &GeoGraph, terms: &[usize]) -> f64 {
    let m = g.edge_count();
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << m) {
        let mask: Vec<bool> = (0..m).map(|e| subset >> e & 1 == 1).collect();
        let label = g.components(Some(&mask));
        if terms.iter().all(|&t| label[t] == label[terms[0]]) {
            best = best.min((0..m).filter(|&e| mask[e]).map(|e| g.edges[e].weight).sum());
        }
    }
    best
}

fn unit_grid(w: usize, h: usize) -> GeoGraph {
    let nodes = (0..h).flat_map(|y| (0..w).map(move |x| Point::new(vec![x as f64, y as f64]))).collect();
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = y * w + x;
            if x + 1 < w {
                edges.push(GraphEdge { a: v, b: v + 1, weight: 1.0 });
            }
            if y + 1 < h {
                edges.push(GraphEdge { a: v, b: v + w, weight: 1.0 });
            }
        }
    }
    GeoGraph::new(nodes, edges).unwrap()
}

fn c2_steiner() -> Verdict {
    let mut r = rng(2);
    let mut bad = 0;
    let trials = 120;
    for _ in 0..trials {
        let n = r.gen_range(2..=8);
        let nodes = (0..n).map(|i| Point::new(vec![i as f64, 0.0])).collect();
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if edges.len() < 16 && r.gen_bool(0.45) {
                    edges.push(GraphEdge { a, b, weight: r.gen_range(1..=9) as f64 });
                }
            }
        }
        let g = GeoGraph::new(nodes, edges).unwrap();
        let k = r.gen_range(1..=n.min(4));
        let mut terms: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = r.gen_range(i..n);
            terms.swap(i, j);
        }
        terms.truncate(k);
        let want = steiner_brute(&g, &terms);
        let got = steiner_tree_dw(&g, &terms).map_or(f64::INFINITY, |u| u.weight);
        if got != want {
            bad += 1;
        }
    }
    let corners = steiner_tree_dw(&unit_grid(3, 3), &[0, 2, 6, 8]).unwrap().weight;
    check(bad == 0 && corners == 6.0, format!("{trials} graphs, {bad} mismatches; four corners of a 2x2 grid = {corners}"))
}

fn c3_l2_toy() -> Verdict {
    let inst = toy(Metric::L2);
    let sol = solve_continuous(&inst, &ContinuousOptions::default()).unwrap();
    let want = 2.0 + 3f64.sqrt() / 2.0;
    let aux = &sol.positions[&3];
    let (ax, ay) = (0.5, -2.0 + 1.0 / (2.0 * 3f64.sqrt()));
    let aux_err = (aux.0[0] - ax).abs().max((aux.0[1] - ay).abs());
    let report = degree_check(&inst, &sol);
    check(
        (sol.total_length - want).abs() <= 1e-6 && aux_err <= 1e-5 && report.violations.is_empty(),
        format!(
            "length {:.9} (want {want:.9}), junction off by {aux_err:.1e}, {} degree violations",
            sol.total_length,
            report.violations.len()
        ),
    )
}

fn c4_l1_toy() -> Verdict {
    let inst = toy(Metric::L1);
    let cont = solve_continuous(&inst, &ContinuousOptions::default()).unwrap().total_length;
    let disc = hanan_l1(&inst);
    let dev = deviation(disc, cont).unwrap();
    check(cont == 3.0 && disc == 3.0 && dev == 0.0, format!("continuous {cont}, Hanan {disc}, Dev {dev}"))
}

fn c5_dominance() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for n in [4, 6, 8, 10] {
        for b in [1, 2] {
            for s in [20.0, 200.0] {
                for seed in 0..3 {
                    let inst = gen_instance(&GenParams::new(n, b, s, seed)).unwrap();
                    for metric in [Metric::L1, Metric::L2] {
                        let inst = inst.with_metric(metric);
                        let cont = solve_continuous(&inst, &ContinuousOptions::default()).unwrap().total_length;
                        let base = solve_ftmstn(&inst).unwrap().total_length;
                        worst = worst.max(cont - base);
                        count += 1;
                    }
                }
            }
        }
    }
    let t = toy(Metric::L2);
    let (tc, tb) = (
        solve_continuous(&t, &ContinuousOptions::default()).unwrap().total_length,
        solve_ftmstn(&t).unwrap().total_length,
    );
    let toy_ok = (tc - 2.8660).abs() < 5e-5 && (tb - 4.1231).abs() < 5e-5 && tc < tb;
    check(
        worst <= 1e-9 && toy_ok,
        format!("{count} runs, max(continuous - baseline) = {worst:.3e}; toy {tc:.4} < {tb:.4}"),
    )
}

fn c6_masks() -> Verdict {
    let mut r = rng(6);
    let mut bad = 0;
    let trials = 40;
    for i in 0..trials {
        let n = r.gen_range(3..=7);
        let inst = random_instance(n, 2, 10, 10, 4, Metric::L1, &mut r);
        let kind = if i % 2 == 0 { GridKind::Hanan } else { GridKind::Square };
        let g = build_grid(&inst, kind, 1.0, &[]).unwrap();
        if disc_solve(&inst, &g, true).total_length != disc_solve(&inst, &g, false).total_length {
            bad += 1;
        }
    }
    let w = family_windows(&fig6());
    let fig_ok = w[&0].rect == AxisBox::new([0., 5.], [10., 20.]) && w[&3].rect == AxisBox::new([0., 0.], [10., 9.]);
    check(
        bad == 0 && fig_ok,
        format!(
            "{trials} instances, {bad} masked/unmasked mismatches; windows {:?}-{:?} and {:?}-{:?}",
            w[&0].rect.lo.0, w[&0].rect.hi.0, w[&3].rect.lo.0, w[&3].rect.hi.0
        ),
    )
}

fn c7_deviation() -> Verdict {
    let mut devs = Vec::new();
    for n in [4, 6, 8] {
        for b in [1, 2] {
            for s in [20.0, 100.0, 200.0] {
                for seed in 0..2 {
                    let inst = gen_instance(&GenParams::new(n, b, s, seed)).unwrap().with_metric(Metric::L1);
                    let cont = solve_continuous(&inst, &ContinuousOptions::default()).unwrap().total_length;
                    devs.push(deviation(hanan_l1(&inst), cont).unwrap());
                }
            }
        }
    }
    let min = devs.iter().copied().fold(f64::INFINITY, f64::min);
    let med = median(devs.clone());
    check(
        min >= -1e-9 && med <= 5.0,
        format!("{} instances, Dev min {min:.2e}%, median {med:.2e}%", devs.len()),
    )
}

/// Fastest of three runs, in seconds, plus the search-node count.
fn timed(inst: &Instance, mode: SolveMode) -> (f64, u64) {
    let inst = if mode == SolveMode::Disc { inst.with_metric(Metric::L1) } else { inst.clone() };
    let mut best = f64::INFINITY;
    let mut nodes = 0;
    for _ in 0..3 {
        let start = Instant::now();
        let run = solve_mode(&inst, mode, &ModeOptions::default()).unwrap();
        best = best.min(start.elapsed().as_secs_f64());
        nodes = run.solution.stats.search_nodes;
    }
    (best, nodes)
}

fn c8_desk_sweep() -> Verdict {
    let modes = [SolveMode::ContL1, SolveMode::Disc];
    // (mode, b) -> times and search nodes
    let mut rows: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for n in [6, 8, 10, 12] {
        for b in [1, 2, 3] {
            for seed in 0..3 {
                let inst = gen_instance(&GenParams::new(n, b, 200.0, seed)).unwrap();
                for (mi, &mode) in modes.iter().enumerate() {
                    let (t, k) = timed(&inst, mode);
                    let e = rows.entry((mi, b)).or_default();
                    e.0.push(t);
                    e.1.push(k as f64);
                }
            }
        }
    }
    let overall = |mi: usize| median(rows.iter().filter(|((m, _), _)| *m == mi).flat_map(|(_, v)| v.0.clone()).collect());
    let (cont, disc) = (overall(0), overall(1));
    let mut monotone = true;
    let mut table = Vec::new();
    for (mi, mode) in modes.iter().enumerate() {
        let t: Vec<f64> = (1..=3).map(|b| median(rows[&(mi, b)].0.clone())).collect();
        let k: Vec<f64> = (1..=3).map(|b| median(rows[&(mi, b)].1.clone())).collect();
        monotone &= t.windows(2).all(|w| w[0] <= w[1]) && k.windows(2).all(|w| w[0] <= w[1]);
        table.push(format!(
            "{}: median ms by b {:?}, search nodes {:?}",
            mode.name(),
            t.iter().map(|x| (x * 1e5).round() / 100.0).collect::<Vec<_>>(),
            k
        ));
    }
    check(
        disc < cont && monotone,
        format!(
            "median disc {:.3} ms vs cont-l1 {:.3} ms, difficulty non-decreasing in b: {monotone}; {}",
            disc * 1e3,
            cont * 1e3,
            table.join("; ")
        ),
    )
}

fn c9_generator() -> Verdict {
    let sweep = paper_sweep(5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = gen_instances(&sweep, a.path()).unwrap();
    let pb = gen_instances(&sweep, b.path()).unwrap();
    let files = std::fs::read_dir(a.path()).unwrap().count();
    let same = pa.iter().zip(&pb).all(|(x, y)| std::fs::read(x).unwrap() == std::fs::read(y).unwrap());
    check(
        sweep.len() == 400 && files == 400 && same,
        format!("{} parameter sets, {files} files, byte-identical on regeneration: {same}", sweep.len()),
    )
}

fn solver_command() -> Option<String> {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/../../tools/highs_solve.py");
    let ok = std::process::Command::new("python3")
        .args(["-c", "import highspy"])
        .output()
        .is_ok_and(|o| o.status.success());
    ok.then(|| format!("python3 {script} {{model}} {{solution}}"))
}

/// External optimum, checked for feasibility against the model.
fn external(m: &fttnp::milp::MilpModel, cmd: &str) -> Result<f64, String> {
    match run_external(m, Some(cmd)).map_err(|e| e.to_string())? {
        ExternalOutcome::Solved(s) => {
            let mut values = s.values.clone();
            for v in &m.variables {
                values.entry(v.name.clone()).or_insert(0.0);
            }
            let ver = verify_solution(m, &values).map_err(|e| e.to_string())?;
            if !ver.feasible {
                return Err(format!("infeasible point, max violation {:.2e}", ver.max_violation));
            }
            Ok(s.objective)
        }
        ExternalOutcome::Unavailable(why) => Err(why),
    }
}

fn c10_models() -> Verdict {
    let Some(cmd) = solver_command() else {
        return Verdict::Skip("no external MILP solver (python3 with highspy) found".into());
    };
    let mut r = rng(10);
    let mut bad = Vec::new();
    let mut disc_count = 0;
    while disc_count < 12 {
        let n = r.gen_range(2..=4);
        let inst = random_instance(n, 2, 4, 3, 1, Metric::L1, &mut r);
        let g = build_grid(&inst, GridKind::Square, 1.0, &[]).unwrap();
        let cands = candidate_sets(&inst, &g).unwrap();
        let fix = apply_fixing(&g, &inst, &cands, &family_windows(&inst));
        let want = solve_discrete(&inst, &g, &cands, Some(&fix), &DiscreteOptions::default()).unwrap().total_length;
        let m = build_discrete_milp(&inst, &g, &cands, Some(&fix)).unwrap();
        match external(&m, &cmd) {
            Ok(v) if (v - want).abs() <= 1e-6 => {}
            Ok(v) => bad.push(format!("disc #{disc_count}: {v} vs {want}")),
            Err(e) => bad.push(format!("disc #{disc_count}: {e}")),
        }
        disc_count += 1;
    }
    let mut cont_count = 0;
    while cont_count < 6 {
        let n = r.gen_range(3..=5);
        let inst = random_instance(n, 1, 10, 10, 3, Metric::L1, &mut r);
        let want = solve_continuous(&inst, &ContinuousOptions::default()).unwrap().total_length;
        for variant in [ContinuousVariant::Flow, ContinuousVariant::Projected] {
            let m = build_continuous_l1_milp(&inst, variant).unwrap();
            match external(&m, &cmd) {
                Ok(v) if (v - want).abs() <= 1e-6 => {}
                Ok(v) => bad.push(format!("cont {variant:?} #{cont_count}: {v} vs {want}")),
                Err(e) => bad.push(format!("cont {variant:?} #{cont_count}: {e}")),
            }
        }
        cont_count += 1;
    }
    check(
        bad.is_empty(),
        format!("{disc_count} discrete and {cont_count} continuous (both variants) models via HiGHS; mismatches {bad:?}"),
    )
}

fn c11_l2_hygiene() -> Verdict {
    let mut r = rng(11);
    let (mut rises, mut worst, mut probed) = (0, 0.0f64, 0);
    let trials = 1000;
    for _ in 0..trials {
        let n = r.gen_range(2..=8);
        let arcs: Vec<(usize, usize)> = (1..n).map(|v| (r.gen_range(0..v), v)).collect();
        let domains: Vec<NodeDomain> = (0..n)
            .map(|v| if v > 0 && r.gen_bool(0.35) { NodeDomain::Free } else { NodeDomain::Box(random_box(20, 20, 6, &mut r)) })
            .collect();
        let cfg = FixedConfig { domains, arcs, metric: Metric::L2 };
        let run = solve_fixed_l2_with(&cfg, L2Options { trace: true, ..L2Options::default() }).unwrap();
        rises += run.trace.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count();

        // one-sided probes at free nodes: no axis move may shorten the tree
        let scale = cfg.scale();
        let h = 1e-3 * scale;
        let adj = cfg.adjacency();
        let x = &run.solution.positions;
        let base = cfg.length_of(x);
        for v in 0..n {
            if cfg.domains[v] != NodeDomain::Free || adj[v].is_empty() {
                continue;
            }
            let apart = adj[v].iter().all(|&u| fttnp::metric_dist(Metric::L2, &x[v], &x[u]).unwrap() > 1e-6 * scale);
            if !apart {
                continue;
            }
            probed += 1;
            for k in 0..2 {
                for sign in [-1.0, 1.0] {
                    let mut y = x.clone();
                    y[v].0[k] += sign * h;
                    worst = worst.max((base - cfg.length_of(&y)) / scale);
                }
            }
        }
    }
    check(
        rises == 0 && worst <= 1e-6,
        format!("{trials} configurations, {rises} objective rises; {probed} free nodes probed, worst relative gain {worst:.2e}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Verdict); 11] = [
        (1, "discrete solver equals brute force", c1_oracle),
        (2, "Steiner DP equals edge-subset minimum", c2_steiner),
        (3, "L2 toy value, junction and degrees", c3_l2_toy),
        (4, "L1 toy value and Hanan Dev 0", c4_l1_toy),
        (5, "continuous never worse than baseline", c5_dominance),
        (6, "fixing masks keep the optimum", c6_masks),
        (7, "deviation small and non-negative", c7_deviation),
        (8, "desk sweep ordering", c8_desk_sweep),
        (9, "generator contract", c9_generator),
        (10, "model fidelity against an external solver", c10_models),
        (11, "L2 descent hygiene", c11_l2_hygiene),
    ];
    let mut unexpected = Vec::new();
    for (id, title, f) in criteria {
        let start = Instant::now();
        let verdict = f();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Verdict::Pass(d) => println!("PASS criterion {id} ({title}): {d} [{secs:.1}s]"),
            Verdict::Skip(d) => println!("SKIP criterion {id} ({title}): {d}"),
            Verdict::Fail(d) => {
                let note = if KNOWN_RED.contains(&id) { " (known, documented)" } else { "" };
                println!("FAIL criterion {id} ({title}){note}: {d} [{secs:.1}s]");
                if !KNOWN_RED.contains(&id) {
                    unexpected.push(id);
                }
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
