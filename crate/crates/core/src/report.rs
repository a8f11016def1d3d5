//! Run reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{CoarseLayout, IsyncMode, Scheme, Zeta};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sync,
    Simulator,
    Threads,
}

/// Per-process counters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessStats {
    pub rank: usize,
    pub iterations: usize,
    /// Coarse solutions installed.
    pub coarse_installs: usize,
    /// Coarse corrections applied to the fine iterate.
    pub corrections: usize,
    /// Largest number of corrections made with one coarse solution.
    pub max_corrections_per_install: u32,
    pub slowdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub engine: Engine,
    pub scheme: Scheme,
    pub layout: CoarseLayout,
    pub isync: Option<IsyncMode>,
    pub theta: f64,
    pub zeta: Zeta,
    pub epsilon: f64,
    /// Iteration count; the per-process average for asynchronous runs.
    pub iterations: f64,
    /// Average number of coarse solutions per process.
    pub coarse_solves: f64,
    /// `iterations / coarse_solves`, zero without coarse solves.
    pub identical_corrections_avg: f64,
    /// Residual norm estimates seen by the stopping test, first one initial.
    pub residual_history: Vec<f64>,
    /// `||b - A x||_2` recomputed from the assembled final iterate.
    pub final_residual: f64,
    pub converged: bool,
    pub diverged: bool,
    pub sim_ticks: Option<u64>,
    pub wall_seconds: Option<f64>,
    pub processes: Vec<ProcessStats>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::Error::Parse(e.to_string()))
    }

    /// Writes `k,residual` rows.
    pub fn write_residual_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,residual")?;
        for (k, r) in self.residual_history.iter().enumerate() {
            writeln!(out, "{k},{r:e}")?;
        }
        Ok(())
    }

    /// Summary statistics over processes.
    pub(crate) fn finish_counts(&mut self) {
        let p = self.processes.len().max(1) as f64;
        self.iterations = self.processes.iter().map(|s| s.iterations as f64).sum::<f64>() / p;
        self.coarse_solves = self.processes.iter().map(|s| s.coarse_installs as f64).sum::<f64>() / p;
        self.identical_corrections_avg =
            if self.coarse_solves > 0.0 { self.iterations / self.coarse_solves } else { 0.0 };
    }
}
