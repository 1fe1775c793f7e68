use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fttnp::bench::{gen_instances, run_bench, solve_mode, BenchOptions, GenParams, ModeOptions, SolveMode};
use fttnp::grid::{apply_fixing, build_grid, candidate_sets, family_windows, GridKind};
use fttnp::milp::{build_continuous_l1_milp, build_discrete_milp, export_model, ContinuousVariant, ModelFormat};
use fttnp::svg::write_svg;
use fttnp::{parse_instance, Instance, Metric, Solution};

#[derive(Parser)]
#[command(name = "fttnp", version, about = "Fixed-topology minimum-length trees with neighborhoods")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ContL1,
    ContL2,
    Disc,
    Ftmstn,
}

impl From<Mode> for SolveMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::ContL1 => SolveMode::ContL1,
            Mode::ContL2 => SolveMode::ContL2,
            Mode::Disc => SolveMode::Disc,
            Mode::Ftmstn => SolveMode::Ftmstn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Hanan,
    Square,
    Tri,
}

impl From<Grid> for GridKind {
    fn from(g: Grid) -> Self {
        match g {
            Grid::Hanan => GridKind::Hanan,
            Grid::Square => GridKind::Square,
            Grid::Tri => GridKind::Triangular,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Mps,
    Lp,
}

#[derive(Clone, Copy, ValueEnum)]
enum Formulation {
    ContFlow,
    ContProj,
    Disc,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate random instances (one file per n, b, s and seed).
    Gen {
        #[arg(long, value_delimiter = ',', default_values_t = [20, 50, 100, 200])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5])]
        b: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [20.0, 50.0, 100.0, 200.0])]
        s: Vec<f64>,
        /// Seeds 0..seeds per cell.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance and write the solution as JSON.
    Solve {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, value_enum, default_value = "hanan")]
        grid: Grid,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        /// Keep every edge available to every family.
        #[arg(long)]
        no_fixing: bool,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a mixed-integer model file.
    Export {
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long, value_enum)]
        formulation: Formulation,
        #[arg(long, value_enum, default_value = "hanan")]
        grid: Grid,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw an instance and optionally a solution as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        sol: Option<PathBuf>,
        /// Draw this routing grid beneath the tree.
        #[arg(long, value_enum)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every instance in a directory and write CSV records.
    Bench {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Mode::ContL1, Mode::Disc])]
        modes: Vec<Mode>,
        #[arg(long, default_value_t = 10_000_000)]
        budget: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn read_instance(path: &PathBuf) -> Result<Instance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_instance(&text).with_context(|| format!("parsing {}", path.display()))?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Gen { n, b, s, seeds, out } => {
            let mut params = Vec::new();
            for &n in &n {
                for &b in &b {
                    for &s in &s {
                        params.extend((0..seeds).map(|seed| GenParams::new(n, b, s, seed)));
                    }
                }
            }
            let files = gen_instances(&params, &out)?;
            println!("wrote {} instances to {}", files.len(), out.display());
        }
        Cmd::Solve { mode, grid, step, budget, no_fixing, input, out } => {
            let inst = read_instance(&input)?;
            let opts = ModeOptions {
                grid: grid.into(),
                step,
                budget,
                fixing: !no_fixing,
            };
            let run = solve_mode(&inst, mode.into(), &opts)?;
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            let sol = &run.solution;
            eprintln!(
                "status {} length {} lower bound {} search nodes {}",
                sol.status, sol.total_length, sol.lower_bound, sol.stats.search_nodes
            );
            match out {
                Some(p) => std::fs::write(&p, sol.to_json()).with_context(|| format!("writing {}", p.display()))?,
                None => println!("{}", sol.to_json()),
            }
        }
        Cmd::Export { format, formulation, grid, step, input, out } => {
            let inst = read_instance(&input)?;
            let model = match formulation {
                // the continuous models are linear only under L1
                Formulation::ContFlow => build_continuous_l1_milp(&inst.with_metric(Metric::L1), ContinuousVariant::Flow)?,
                Formulation::ContProj => build_continuous_l1_milp(&inst.with_metric(Metric::L1), ContinuousVariant::Projected)?,
                Formulation::Disc => {
                    let g = build_grid(&inst, grid.into(), step, &[])?;
                    let cands = candidate_sets(&inst, &g)?;
                    let fix = apply_fixing(&g, &inst, &cands, &family_windows(&inst));
                    build_discrete_milp(&inst, &g, &cands, Some(&fix))?
                }
            };
            let fmt = match format {
                Format::Mps => ModelFormat::Mps,
                Format::Lp => ModelFormat::Lp,
            };
            export_model(&model, fmt, &out)?;
            println!(
                "wrote {} columns, {} rows ({} binary) to {}",
                model.variables.len(),
                model.constraints.len(),
                model.binary_count(),
                out.display()
            );
        }
        Cmd::Plot { input, sol, grid, step, out } => {
            let inst = read_instance(&input)?;
            let sol = match sol {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Some(Solution::from_json(&text)?)
                }
                None => None,
            };
            let g = grid.map(|k| build_grid(&inst, k.into(), step, &[])).transpose()?;
            write_svg(&inst, sol.as_ref(), g.as_ref(), &out)?;
        }
        Cmd::Bench { dir, modes, budget, workers, csv } => {
            if modes.is_empty() {
                bail!("no modes given");
            }
            let mut opts = BenchOptions { budget, ..BenchOptions::default() };
            if let Some(w) = workers {
                opts.workers = w;
            }
            let modes: Vec<SolveMode> = modes.into_iter().map(Into::into).collect();
            let report = run_bench(&dir, &modes, &opts)?;
            std::fs::write(&csv, &report.csv).with_context(|| format!("writing {}", csv.display()))?;
            for r in report.records.iter().filter(|r| r.error.is_some()) {
                eprintln!("{} {}: {}", r.instance, r.mode, r.error.as_deref().unwrap_or_default());
            }
            print!("{}", report.profile);
        }
    }
    Ok(())
}
