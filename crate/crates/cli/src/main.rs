use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use quadtank::config::RunConfig;
use quadtank::estimation::InitialCovariance;
use quadtank::harness::{
    compare, compute_metrics, render_csv, render_text, run_closed_loop, ComparisonRow,
    ControllerKind, RunRecord,
};
use quadtank::sysid::{
    estimate_parameters, generate_excitation, goodness_of_fit, negative_log_likelihood_multi,
    open_loop_levels, simulate_dataset, Dataset, EstimationProblem, FilterSetup, Param,
};
use quadtank::ModelParams;

/// Quadruple-tank simulation, identification and control experiments.
#[derive(Debug, Parser)]
#[command(name = "quadtank", version)]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parameter preset or file: the plant for `simulate` and `run`, the
    /// initial guess for `estimate`.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open-loop random-step experiment; writes dataset.csv.
    Simulate,
    /// Maximum-likelihood parameter estimate; writes estimate.toml.
    Estimate {
        /// Estimation data (default: <out>/dataset.csv).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Validation data; without it the estimation file is split.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Closed-loop experiment; writes run-<controller>.csv and its sidecar.
    Run {
        #[arg(long, value_enum)]
        controller: Controller,
    },
    /// Performance table of saved runs; writes compare.csv.
    Compare {
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Controller {
    Pid,
    Lmpc,
    Nmpc,
}

impl From<Controller> for ControllerKind {
    fn from(c: Controller) -> Self {
        match c {
            Controller::Pid => ControllerKind::Pid,
            Controller::Lmpc => ControllerKind::Lmpc,
            Controller::Nmpc => ControllerKind::Nmpc,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(path) => {
            RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Simulate => {
            if let Some(p) = cli.preset {
                cfg.plant = p;
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            simulate(&cfg, &out)
        }
        Command::Estimate { data, validation } => {
            if let Some(p) = cli.preset {
                cfg.estimation.initial = p;
            }
            let data = data.unwrap_or_else(|| out.join("dataset.csv"));
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            estimate(&cfg, &data, validation.as_deref(), &out)
        }
        Command::Run { controller } => {
            if let Some(p) = cli.preset {
                cfg.plant = p;
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            run(&cfg, controller.into(), &out)
        }
        Command::Compare { records } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            compare_runs(&records, &out)
        }
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<ExitCode> {
    let seed = cfg.seed()?;
    let plant = cfg.plant_params()?;
    let excitation = cfg.excitation();
    let inputs = generate_excitation(seed, &excitation)?;
    let data = simulate_dataset(
        &plant,
        &inputs,
        excitation.ts,
        cfg.experiment.noise.into(),
        seed,
    )?;
    let path = out.join("dataset.csv");
    data.save(&path)
        .with_context(|| format!("writing {}", path.display()))?;

    println!(
        "wrote {} ({} samples, Ts = {} s, plant {})",
        path.display(),
        data.len(),
        excitation.ts,
        cfg.plant
    );
    println!(
        "{:<8} {:>10} {:>10} {:>10} {:>10}",
        "signal", "min", "mean", "max", "std"
    );
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for i in 0..4 {
        columns.push((format!("y{}", i + 1), data.y.iter().map(|y| y[i]).collect()));
    }
    for j in 0..2 {
        columns.push((format!("u{}", j + 1), data.u.iter().map(|u| u[j]).collect()));
    }
    for (name, v) in columns {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{name:<8} {min:>10.3} {mean:>10.3} {max:>10.3} {std:>10.3}");
    }
    Ok(ExitCode::SUCCESS)
}

fn estimate(
    cfg: &RunConfig,
    data_path: &Path,
    validation: Option<&Path>,
    out: &Path,
) -> Result<ExitCode> {
    let full =
        Dataset::load(data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let (est_data, val_data) = match validation {
        Some(p) => (
            full,
            Dataset::load(p).with_context(|| format!("reading {}", p.display()))?,
        ),
        None => {
            let split = cfg.estimation.split;
            if !(split > 0.0 && split < 1.0) {
                bail!("estimation split must lie in (0, 1), got {split}");
            }
            let cut = (full.len() as f64 * split).round() as usize;
            if cut < 2 || full.len() - cut < 2 {
                bail!(
                    "dataset of {} samples is too short to split at {split}",
                    full.len()
                );
            }
            (full.slice(0..cut)?, full.slice(cut..full.len())?)
        }
    };

    let theta0 = ModelParams::resolve(&cfg.estimation.initial)?;
    let free = cfg.free_parameters()?;
    let mut problem = EstimationProblem::new(vec![est_data.clone()], free.clone(), theta0);
    problem.options = cfg.estimation_options()?;
    problem.setup = FilterSetup {
        p0: InitialCovariance {
            mass: cfg.filter.p0_mass,
            disturbance: cfg.filter.p0_disturbance,
        },
        ..FilterSetup::default()
    };
    let est = match estimate_parameters(&problem) {
        Ok(e) => e,
        Err(e) => bail!("estimation failed: {e}"),
    };
    let v0 = negative_log_likelihood_multi(&theta0, &problem.data, &problem.setup)?.value;

    let path = out.join("estimate.toml");
    fs::write(&path, est.theta.to_toml()).with_context(|| format!("writing {}", path.display()))?;

    let mut report = String::new();
    writeln!(
        report,
        "{:<10} {:>14} {:>14} {:>5}",
        "parameter", "initial", "estimated", "free"
    )?;
    for p in all_parameters() {
        let mark = if free.contains(&p) { "*" } else { "" };
        writeln!(
            report,
            "{:<10} {:>14.6} {:>14.6} {:>5}",
            p.to_string(),
            p.get(&theta0),
            p.get(&est.theta),
            mark
        )?;
    }
    writeln!(report)?;
    writeln!(report, "V_ML initial   {v0:.6}")?;
    writeln!(report, "V_ML estimated {:.6}", est.v_ml)?;
    writeln!(
        report,
        "evaluations {}  converged {}  start values {}",
        est.diagnostics.evals,
        est.diagnostics.converged,
        est.diagnostics
            .start_values
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(report)?;
    writeln!(
        report,
        "{:<12} {:>12} {:>12}",
        "GOF [%]", "estimation", "validation"
    )?;
    for (name, theta) in [("initial", &theta0), ("estimated", &est.theta)] {
        let g_est = goodness_of_fit(&est_data.y, &open_loop_levels(theta, &est_data)?)?;
        let g_val = goodness_of_fit(&val_data.y, &open_loop_levels(theta, &val_data)?)?;
        writeln!(report, "{name:<12} {g_est:>12.2} {g_val:>12.2}")?;
    }
    print!("{report}");
    println!("wrote {}", path.display());
    if !est.diagnostics.converged {
        eprintln!("warning: simplex stopped on its evaluation budget");
    }
    Ok(ExitCode::SUCCESS)
}

fn all_parameters() -> Vec<Param> {
    ["a", "A", "gamma", "sigma"]
        .iter()
        .flat_map(|g| Param::parse_group(g).expect("built-in group"))
        .collect()
}

fn run(cfg: &RunConfig, kind: ControllerKind, out: &Path) -> Result<ExitCode> {
    let (loop_cfg, schedule) = cfg.closed_loop()?;
    let record = run_closed_loop(&loop_cfg, kind, &schedule)?;
    let path = out.join(format!("run-{}.csv", kind.name()));
    record
        .save(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} ({} samples)", path.display(), record.rows.len());
    if !record.rows.is_empty() {
        let report = compute_metrics(&record)?;
        let row = ComparisonRow {
            controller: record.meta.controller.clone(),
            report,
        };
        print!("{}", render_text(&[row]));
    }
    if let Some(reason) = &record.meta.failure {
        eprintln!("error: run stopped early: {reason}");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_runs(paths: &[PathBuf], out: &Path) -> Result<ExitCode> {
    let mut records = Vec::new();
    for p in paths {
        records.push(RunRecord::load(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let rows = compare(&records)?;
    let path = out.join("compare.csv");
    fs::write(&path, render_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", render_text(&rows));
    let incomplete: Vec<&str> = records
        .iter()
        .filter(|r| !r.is_complete())
        .map(|r| r.meta.controller.as_str())
        .collect();
    if !incomplete.is_empty() {
        eprintln!("error: incomplete runs: {}", incomplete.join(", "));
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
