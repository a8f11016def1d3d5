//! Asynchronous execution: a deterministic discrete-event simulator with
//! programmable delays and a multi-threaded engine, both driving the same
//! per-process state machine.

mod delay;
mod mailbox;
mod sim;
mod threaded;
mod trace;
mod worker;

pub use delay::{ActiveSetRule, DelayMode, DelaySchedule, DelayScript, LinkDelay};
pub use sim::{simulate, SimOptions};
pub use threaded::{run_threads, ThreadOptions};
pub use trace::{write_trace_csv, TraceEvent};
pub use worker::{CoarseRecord, SnapshotRecord, StopReason};

use crate::config::{CoarseLayout, Scheme, SolverConfig};
use crate::error::{Error, Result};
use crate::report::{Engine, RunReport};
use crate::schwarz::SchwarzSetup;
use worker::WorkerResult;

/// Result of an asynchronous run.
#[derive(Debug, Clone)]
pub struct AsyncOutcome {
    /// Assembled global iterate.
    pub x: Vec<f64>,
    pub report: RunReport,
    pub stops: Vec<Option<StopReason>>,
    /// Local iterate of each process after each of its iterations,
    /// indexed `[rank][iteration]`, when requested.
    pub iterates: Option<Vec<Vec<Vec<f64>>>>,
    /// Local snapshot parts, when coarse recording is on.
    pub snapshots: Vec<SnapshotRecord>,
    /// Right-hand sides of every coarse solve, when coarse recording is on.
    pub coarse_solves: Vec<CoarseRecord>,
    pub trace: Vec<TraceEvent>,
    /// Longest run of ticks an eligible process was left out.
    pub max_skipped: u32,
}

fn check_inputs(setup: &SchwarzSetup, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if config.scheme.is_two_level() && setup.coarse().is_none() {
        return Err(Error::InvalidConfig("scheme: two-level run without a coarse space".into()));
    }
    if config.layout == CoarseLayout::Centralized && config.root >= setup.num_subdomains() {
        return Err(Error::InvalidConfig(format!(
            "root: {} is not a process of {}",
            config.root,
            setup.num_subdomains()
        )));
    }
    Ok(())
}

fn build_outcome(
    setup: &SchwarzSetup,
    config: &SolverConfig,
    engine: Engine,
    results: Vec<WorkerResult>,
    record_iterates: bool,
) -> AsyncOutcome {
    let locals: Vec<Vec<f64>> = results.iter().map(|r| r.x.clone()).collect();
    let x = setup.assemble(&locals);
    let final_residual = setup.true_residual(&locals);
    let stops: Vec<Option<StopReason>> = results.iter().map(|r| r.stop).collect();
    let history = results.first().map(|r| r.history.clone()).unwrap_or_default();
    let mut report = RunReport {
        engine,
        scheme: config.scheme,
        layout: config.layout,
        isync: config.scheme.is_two_level().then_some(config.isync),
        theta: config.theta,
        zeta: config.zeta,
        epsilon: config.epsilon,
        iterations: 0.0,
        coarse_solves: 0.0,
        identical_corrections_avg: 0.0,
        residual_history: history,
        final_residual,
        converged: stops.iter().all(|s| *s == Some(StopReason::Converged)),
        diverged: stops.contains(&Some(StopReason::Diverged)),
        sim_ticks: None,
        wall_seconds: None,
        processes: results.iter().map(|r| r.stats.clone()).collect(),
    };
    report.finish_counts();
    if config.scheme == Scheme::OneLevel {
        report.identical_corrections_avg = 0.0;
    }
    let mut snapshots = Vec::new();
    let mut coarse_solves = Vec::new();
    let mut iterates = Vec::new();
    for r in results {
        snapshots.extend(r.snapshots);
        coarse_solves.extend(r.coarse);
        iterates.push(r.iterates);
    }
    AsyncOutcome {
        x,
        report,
        stops,
        iterates: record_iterates.then_some(iterates),
        snapshots,
        coarse_solves,
        trace: Vec::new(),
        max_skipped: 0,
    }
}
