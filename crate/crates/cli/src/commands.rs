//! Subcommand implementations. Each returns whether the run succeeded.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use schwarz_core::analysis;
use schwarz_core::config::{IsyncMode, SolverConfig, Zeta};
use schwarz_core::decomposition::{build_coarse, partition_box, Decomposition};
use schwarz_core::linalg::{read_matrix_market, SparseMatrix};
use schwarz_core::problem::{assemble_poisson, PoissonSpec};
use schwarz_core::report::RunReport;
use schwarz_core::runtime::{run_threads, simulate, write_trace_csv, DelaySchedule, SimOptions, ThreadOptions, TraceEvent};
use schwarz_core::schwarz::SchwarzSetup;
use schwarz_core::sync::solve_sync;
use schwarz_core::{Error, Result};

use crate::config::{EngineChoice, ExperimentConfig};

const SWEEP_HEADER: &str = "# schwarz sweep v1";
const IMBALANCE_HEADER: &str = "# schwarz imbalance v1";
const RESIDUALS_HEADER: &str = "# schwarz residuals v1";

/// 2 for anything wrong with the inputs, 1 for failures while solving.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidProblem(_)
        | Error::InvalidDecomposition(_)
        | Error::Parse(_)
        | Error::TooLarge { .. }
        | Error::Io(_) => 2,
        _ => 1,
    }
}

struct System {
    matrix: SparseMatrix,
    rhs: Vec<f64>,
    decomposition: Decomposition,
    description: String,
}

fn build_system(cfg: &ExperimentConfig) -> Result<System> {
    let problem = &cfg.problem;
    let (matrix, rhs, grid, what) = match &problem.matrix {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::InvalidConfig(format!("matrix {}: {e}", path.display())))?;
            let matrix = read_matrix_market(BufReader::new(file))?;
            let n = matrix.nrows();
            // the box partition needs a grid; fall back to a line
            let grid = if problem.grid.iter().product::<usize>() == n { problem.grid } else { [n, 1, 1] };
            (matrix, vec![problem.source; n], grid, format!("matrix {}", path.display()))
        }
        None => {
            let spec = PoissonSpec { cells: problem.grid, source: problem.source, scaling: problem.scaling };
            let (a, b) = assemble_poisson(&spec)?;
            let [nx, ny, nz] = problem.grid;
            (a, b, problem.grid, format!("poisson {nx}x{ny}x{nz} {:?}", problem.scaling).to_lowercase())
        }
    };
    let d = &cfg.decomposition;
    let decomposition = partition_box(grid, d.procs, d.overlap)?.with_weights(d.weights);
    let [px, py, pz] = d.procs;
    let description = format!(
        "{what}, procs {px}x{py}x{pz}, overlap {}, {:?} weights, {:?} coarse",
        d.overlap, d.weights, d.coarse_kind
    )
    .to_lowercase();
    Ok(System { matrix, rhs, decomposition, description })
}

fn build_setup(cfg: &ExperimentConfig, system: &System) -> Result<SchwarzSetup> {
    SchwarzSetup::new(
        system.matrix.clone(),
        system.rhs.clone(),
        system.decomposition.clone(),
        &cfg.solver,
        cfg.decomposition.coarse_kind,
    )
}

fn run_once(
    cfg: &ExperimentConfig,
    setup: &SchwarzSetup,
    solver: &SolverConfig,
    schedule: &DelaySchedule,
) -> Result<(RunReport, Vec<TraceEvent>)> {
    match cfg.run.engine {
        EngineChoice::Sync => Ok((solve_sync(setup, solver, false)?.report, Vec::new())),
        EngineChoice::Sim => {
            let options = SimOptions { trace: cfg.run.trace, max_ticks: cfg.run.max_ticks, ..SimOptions::default() };
            let out = simulate(setup, solver, schedule, options)?;
            Ok((out.report, out.trace))
        }
        EngineChoice::Threads => {
            let options =
                ThreadOptions { slowdown: schedule.slowdown.clone(), trace: cfg.run.trace, ..ThreadOptions::default() };
            let out = run_threads(setup, solver, &options)?;
            Ok((out.report, out.trace))
        }
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    let dir = cfg.run.out.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn status(report: &RunReport) -> &'static str {
    if report.converged {
        "converged"
    } else if report.diverged {
        "diverged"
    } else {
        "iteration_limit"
    }
}

pub fn solve(cfg: &ExperimentConfig) -> Result<bool> {
    let system = build_system(cfg)?;
    let setup = build_setup(cfg, &system)?;
    let (report, trace) = run_once(cfg, &setup, &cfg.solver, &cfg.schedule(0)?)?;
    let dir = out_dir(cfg)?;
    let mut json = create(&dir.join("report.json"))?;
    writeln!(json, "{}", report.to_json()?)?;
    json.flush()?;
    let mut csv = create(&dir.join("residuals.csv"))?;
    writeln!(csv, "{RESIDUALS_HEADER}")?;
    report.write_residual_csv(&mut csv)?;
    csv.flush()?;
    if cfg.run.trace && cfg.run.engine != EngineChoice::Sync {
        let mut out = create(&dir.join("trace.csv"))?;
        write_trace_csv(&trace, &mut out)?;
        out.flush()?;
    }
    println!(
        "{}: {} after {} iterations, final residual {:e}",
        system.description,
        status(&report),
        report.iterations,
        report.final_residual
    );
    Ok(report.converged)
}

#[derive(Serialize)]
struct SweepRow {
    isync: &'static str,
    theta: f64,
    zeta: String,
    rep: usize,
    status: String,
    iterations: Option<f64>,
    coarse_solves: Option<f64>,
    k_per_c: Option<f64>,
    final_residual: Option<f64>,
    sim_ticks: Option<u64>,
    error: String,
}

fn isync_name(mode: IsyncMode) -> &'static str {
    match mode {
        IsyncMode::XTau => "xtau",
        IsyncMode::Tau => "tau",
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(format!("csv: {e}"))
}

fn csv_writer(path: &Path, header: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = create(path)?;
    writeln!(file, "{header}")?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes sweep.csv. Failed runs become rows; the sweep itself succeeds.
pub fn sweep(cfg: &ExperimentConfig, thetas: &[f64], zetas: &[Zeta], isyncs: &[IsyncMode]) -> Result<bool> {
    if thetas.is_empty() || zetas.is_empty() {
        return Err(Error::InvalidConfig("sweep: theta and zeta lists must be nonempty".into()));
    }
    let isyncs = if isyncs.is_empty() { vec![cfg.solver.isync] } else { isyncs.to_vec() };
    let system = build_system(cfg)?;
    let setup = build_setup(cfg, &system)?;
    let mut writer = csv_writer(&out_dir(cfg)?.join("sweep.csv"), SWEEP_HEADER)?;
    let mut rows = 0;
    for &isync in &isyncs {
        for &theta in thetas {
            for &zeta in zetas {
                for rep in 0..cfg.run.repetitions {
                    let solver = SolverConfig { theta, zeta, isync, ..cfg.solver };
                    let result = cfg.schedule(rep).and_then(|schedule| run_once(cfg, &setup, &solver, &schedule));
                    let row = match result {
                        Ok((report, _)) => SweepRow {
                            isync: isync_name(isync),
                            theta,
                            zeta: zeta.to_string(),
                            rep,
                            status: status(&report).into(),
                            iterations: Some(report.iterations),
                            coarse_solves: Some(report.coarse_solves),
                            k_per_c: Some(report.identical_corrections_avg),
                            final_residual: Some(report.final_residual),
                            sim_ticks: report.sim_ticks,
                            error: String::new(),
                        },
                        Err(e) => SweepRow {
                            isync: isync_name(isync),
                            theta,
                            zeta: zeta.to_string(),
                            rep,
                            status: "error".into(),
                            iterations: None,
                            coarse_solves: None,
                            k_per_c: None,
                            final_residual: None,
                            sim_ticks: None,
                            error: e.to_string(),
                        },
                    };
                    writer.serialize(row).map_err(csv_error)?;
                    rows += 1;
                }
            }
        }
    }
    writer.flush()?;
    println!("{}: {rows} sweep rows", system.description);
    Ok(true)
}

/// Writes certificate.json.
pub fn certify(cfg: &ExperimentConfig) -> Result<bool> {
    let system = build_system(cfg)?;
    let coarse = build_coarse(&system.decomposition, &system.matrix, cfg.decomposition.coarse_kind)?;
    let cert = analysis::certify(system.description.clone(), &system.matrix, &system.decomposition, &coarse)?;
    let mut out = create(&out_dir(cfg)?.join("certificate.json"))?;
    writeln!(out, "{}", cert.to_json()?)?;
    out.flush()?;
    let theta = cert.damping.theta.map_or("none".to_string(), |t| t.to_string());
    println!(
        "{}: m-matrix {:?}, one-level {:.4}, shared {:.4}, lemma {:.4}, sync two-level {:.4}, theta {theta}",
        cert.instance, cert.m_matrix, cert.one_level.rho, cert.shared.rho, cert.lemma.rho, cert.sync_two_level_rho
    );
    Ok(true)
}

#[derive(Serialize)]
struct ImbalanceRow {
    variant: String,
    zeta: String,
    group: usize,
    slowdown: f64,
    iterations: f64,
    coarse_solves: f64,
    k_per_c: f64,
    final_residual: f64,
    ticks: Option<u64>,
    converged: bool,
}

/// Slowdown of `rank` when `p` processes are split into `groups` groups.
pub fn group_of(rank: usize, p: usize, groups: usize) -> usize {
    rank * groups / p
}

fn group_rows(variant: &str, zeta: Zeta, report: &RunReport, groups: usize, ticks: Option<u64>) -> Vec<ImbalanceRow> {
    let p = report.processes.len();
    (0..groups)
        .map(|g| {
            let members: Vec<_> = report.processes.iter().filter(|s| group_of(s.rank, p, groups) == g).collect();
            let count = members.len().max(1) as f64;
            let iterations = members.iter().map(|s| s.iterations as f64).sum::<f64>() / count;
            let coarse_solves = members.iter().map(|s| s.coarse_installs as f64).sum::<f64>() / count;
            ImbalanceRow {
                variant: variant.into(),
                zeta: zeta.to_string(),
                group: g,
                slowdown: (g + 1) as f64,
                iterations,
                coarse_solves,
                k_per_c: if coarse_solves > 0.0 { iterations / coarse_solves } else { 0.0 },
                final_residual: report.final_residual,
                ticks,
                converged: report.converged,
            }
        })
        .collect()
}

/// Writes imbalance.csv: a synchronous baseline and one asynchronous run
/// per zeta, with processes in group `g` slowed down by `g + 1`.
pub fn imbalance(cfg: &ExperimentConfig, groups: usize, zetas: &[Zeta]) -> Result<bool> {
    let p = cfg.process_count();
    if groups == 0 || groups > p {
        return Err(Error::InvalidConfig(format!("max-slowdown: must be in 1..={p}, got {groups}")));
    }
    let system = build_system(cfg)?;
    let setup = build_setup(cfg, &system)?;
    let slowdown: Vec<f64> = (0..p).map(|r| (group_of(r, p, groups) + 1) as f64).collect();
    let mut writer = csv_writer(&out_dir(cfg)?.join("imbalance.csv"), IMBALANCE_HEADER)?;
    let mut all_converged = true;

    // every synchronous iteration waits for the slowest group
    let sync = solve_sync(&setup, &cfg.solver, false)?.report;
    let sync_ticks = (sync.iterations * groups as f64).round() as u64;
    all_converged &= sync.converged;
    for row in group_rows("sync", cfg.solver.zeta, &sync, groups, Some(sync_ticks)) {
        writer.serialize(row).map_err(csv_error)?;
    }

    let schedule = cfg.schedule(0)?.with_slowdown(slowdown.clone());
    let async_cfg = ExperimentConfig {
        run: crate::config::RunSection {
            engine: if cfg.run.engine == EngineChoice::Threads { EngineChoice::Threads } else { EngineChoice::Sim },
            ..cfg.run.clone()
        },
        ..cfg.clone()
    };
    for &zeta in zetas {
        let solver = SolverConfig { zeta, ..cfg.solver };
        let (report, _) = run_once(&async_cfg, &setup, &solver, &schedule)?;
        all_converged &= report.converged;
        println!("async zeta={zeta}: {} ticks {:?}", status(&report), report.sim_ticks);
        for row in group_rows("async", zeta, &report, groups, report.sim_ticks) {
            writer.serialize(row).map_err(csv_error)?;
        }
    }
    writer.flush()?;
    println!("sync: {} in {} iterations ({sync_ticks} ticks)", status(&sync), sync.iterations);
    Ok(all_converged)
}
