//! `schwarz`: run, sweep and certify two-level Schwarz solvers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use schwarz_core::config::{CoarseLayout, IsyncMode, Scheme, SolverKind, StopTest, Zeta};
use schwarz_core::decomposition::{CoarseKind, WeightStrategy};
use schwarz_core::problem::Scaling;
use schwarz_core::Error;

use config::{EngineChoice, ExperimentConfig};

#[derive(Parser)]
#[command(name = "schwarz", version, about = "Synchronous and asynchronous two-level Schwarz solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solve and write report.json and residuals.csv.
    Solve(Common),
    /// Run every (theta, zeta, isync) combination and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        thetas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "inf", value_parser = parse_with::<Zeta>)]
        zetas: Vec<Zeta>,
        /// Coarse synchronization variants; defaults to the configured one.
        #[arg(long, value_delimiter = ',', value_parser = parse_with::<IsyncMode>)]
        isyncs: Vec<IsyncMode>,
    },
    /// Evaluate the convergence conditions densely and write certificate.json.
    Certify(Common),
    /// Split processes into groups slowed down 1..=m and compare variants.
    Imbalance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_slowdown: usize,
        #[arg(long, value_delimiter = ',', default_value = "8,inf", value_parser = parse_with::<Zeta>)]
        zetas: Vec<Zeta>,
    },
}

fn parse_with<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || format!("expected three comma-separated integers, got '{s}'");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

/// Flags shared by every subcommand; each one overrides the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interior grid points per axis, e.g. `8,8,8`.
    #[arg(long, value_parser = parse_triple)]
    grid: Option<[usize; 3]>,
    /// Subdomains per axis, e.g. `2,2,2`.
    #[arg(long, value_parser = parse_triple)]
    procs: Option<[usize; 3]>,
    /// Overlap layers added around each owned box.
    #[arg(long)]
    overlap: Option<usize>,
    /// `one`, `mult` or `add`.
    #[arg(long, value_parser = parse_with::<Scheme>)]
    scheme: Option<Scheme>,
    /// Coarse layout: `replicated` or `centralized`.
    #[arg(long, value_parser = parse_with::<CoarseLayout>)]
    layout: Option<CoarseLayout>,
    /// Damping of the coarse correction.
    #[arg(long)]
    theta: Option<f64>,
    /// Corrections allowed per coarse solution: a positive integer or `inf`.
    #[arg(long, value_parser = parse_with::<Zeta>)]
    zeta: Option<Zeta>,
    /// Stopping threshold on the residual 2-norm.
    #[arg(long)]
    eps: Option<f64>,
    /// Iteration limit, per process for asynchronous engines.
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    /// `zero`, `fixed:D`, `rand:MAX:SEED` or a JSON delay script.
    #[arg(long)]
    delays: Option<String>,
    /// Coarse right-hand side gathering: `xtau` or `tau`.
    #[arg(long, value_parser = parse_with::<IsyncMode>)]
    isync: Option<IsyncMode>,
    /// Asynchronous stopping test: `snapshot` (exact) or `local`.
    #[arg(long, value_parser = parse_with::<StopTest>)]
    stop_test: Option<StopTest>,
    /// Local solver: `lu` or `cg:TOL`.
    #[arg(long, value_parser = parse_with::<SolverKind>)]
    local: Option<SolverKind>,
    /// Coarse solver: `lu` or `cg:TOL`.
    #[arg(long, value_parser = parse_with::<SolverKind>)]
    coarse: Option<SolverKind>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
    #[arg(long, value_enum)]
    coarse_kind: Option<CoarseKindArg>,
    #[arg(long, value_enum)]
    scaling: Option<ScalingArg>,
    /// Matrix Market operator used instead of the Poisson problem.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Ticks per local iteration, one value per process.
    #[arg(long, value_delimiter = ',')]
    slowdown: Option<Vec<f64>>,
    /// Probability that an eligible process runs at a tick.
    #[arg(long)]
    activity: Option<f64>,
    /// Repetitions; each one shifts the random seeds by one.
    #[arg(long)]
    reps: Option<usize>,
    /// Added to every random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulator tick limit.
    #[arg(long)]
    max_ticks: Option<u64>,
    /// Write trace.csv for asynchronous engines.
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum WeightArg {
    Restricted,
    Multiplicity,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum CoarseKindArg {
    Aggregation,
    Injection,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum ScalingArg {
    Fd,
    Fe,
}

impl Common {
    fn resolve(&self) -> schwarz_core::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let p = &mut cfg.problem;
        set(&mut p.grid, self.grid);
        set(&mut p.scaling, self.scaling.map(|s| match s {
            ScalingArg::Fd => Scaling::Fd,
            ScalingArg::Fe => Scaling::Fe,
        }));
        if self.matrix.is_some() {
            p.matrix = self.matrix.clone();
        }
        let d = &mut cfg.decomposition;
        set(&mut d.procs, self.procs);
        set(&mut d.overlap, self.overlap);
        set(&mut d.weights, self.weights.map(|w| match w {
            WeightArg::Restricted => WeightStrategy::Restricted,
            WeightArg::Multiplicity => WeightStrategy::Multiplicity,
        }));
        set(&mut d.coarse_kind, self.coarse_kind.map(|k| match k {
            CoarseKindArg::Aggregation => CoarseKind::Aggregation,
            CoarseKindArg::Injection => CoarseKind::Injection,
        }));
        let s = &mut cfg.solver;
        set(&mut s.scheme, self.scheme);
        set(&mut s.layout, self.layout);
        set(&mut s.theta, self.theta);
        set(&mut s.zeta, self.zeta);
        set(&mut s.epsilon, self.eps);
        set(&mut s.k_max, self.kmax);
        set(&mut s.isync, self.isync);
        set(&mut s.stop_test, self.stop_test);
        set(&mut s.local_solver, self.local);
        set(&mut s.coarse_solver, self.coarse);
        let r = &mut cfg.run;
        set(&mut r.engine, self.engine);
        set(&mut r.delays, self.delays.clone());
        set(&mut r.slowdown, self.slowdown.clone());
        set(&mut r.activity, self.activity);
        set(&mut r.repetitions, self.reps);
        set(&mut r.seed, self.seed);
        set(&mut r.out, self.out.clone());
        if self.max_ticks.is_some() {
            r.max_ticks = self.max_ticks;
        }
        r.trace |= self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(common) => common.resolve().and_then(|cfg| commands::solve(&cfg)),
        Command::Sweep { common, thetas, zetas, isyncs } => {
            common.resolve().and_then(|cfg| commands::sweep(&cfg, thetas, zetas, isyncs))
        }
        Command::Certify(common) => common.resolve().and_then(|cfg| commands::certify(&cfg)),
        Command::Imbalance { common, max_slowdown, zetas } => {
            common.resolve().and_then(|cfg| commands::imbalance(&cfg, *max_slowdown, zetas))
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
