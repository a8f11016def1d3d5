//! Experiment configuration: defaults, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use schwarz_core::config::SolverConfig;
use schwarz_core::decomposition::{CoarseKind, WeightStrategy};
use schwarz_core::problem::Scaling;
use schwarz_core::runtime::{ActiveSetRule, DelayMode, DelaySchedule};
use schwarz_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineChoice {
    #[default]
    Sync,
    Sim,
    Threads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub grid: [usize; 3],
    pub source: f64,
    pub scaling: Scaling,
    /// Matrix Market file replacing the Poisson operator; the right-hand
    /// side is then `source` everywhere.
    pub matrix: Option<PathBuf>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self { grid: [8, 8, 8], source: 1.0, scaling: Scaling::Fd, matrix: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionSection {
    pub procs: [usize; 3],
    pub overlap: usize,
    pub weights: WeightStrategy,
    pub coarse_kind: CoarseKind,
}

impl Default for DecompositionSection {
    fn default() -> Self {
        Self { procs: [2, 2, 2], overlap: 1, weights: WeightStrategy::default(), coarse_kind: CoarseKind::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub engine: EngineChoice,
    /// `zero`, `fixed:D`, `rand:MAX:SEED` or a JSON delay script.
    pub delays: String,
    /// Ticks per local iteration, per process.
    pub slowdown: Vec<f64>,
    /// Probability that an eligible process runs at a tick (1 = all).
    pub activity: f64,
    pub repetitions: usize,
    /// Added to every random seed; repetition `r` adds `r` on top.
    pub seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub max_ticks: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            engine: EngineChoice::Sync,
            delays: "zero".into(),
            slowdown: Vec::new(),
            activity: 1.0,
            repetitions: 1,
            seed: 0,
            out: PathBuf::from("schwarz-out"),
            trace: false,
            max_ticks: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub decomposition: DecompositionSection,
    pub solver: SolverConfig,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config file: {}", e.message().trim())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("config file {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.run.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions: must be at least 1".into()));
        }
        if self.decomposition.procs.contains(&0) {
            return Err(Error::InvalidConfig("procs: every entry must be at least 1".into()));
        }
        if !(self.run.activity > 0.0 && self.run.activity <= 1.0) {
            return Err(Error::InvalidConfig(format!("activity: must be in (0, 1], got {}", self.run.activity)));
        }
        self.schedule(0)?.validate(self.process_count())
    }

    pub fn process_count(&self) -> usize {
        self.decomposition.procs.iter().product()
    }

    /// Delay schedule of repetition `rep`, with every seed shifted.
    pub fn schedule(&self, rep: usize) -> Result<DelaySchedule> {
        let shift = self.run.seed.wrapping_add(rep as u64);
        let mut schedule = DelaySchedule::parse(&self.run.delays)?;
        match &mut schedule.mode {
            DelayMode::Random { seed, .. } => *seed = seed.wrapping_add(shift),
            DelayMode::Script(script) => script.seed = script.seed.wrapping_add(shift),
            DelayMode::Zero | DelayMode::Fixed { .. } => {}
        }
        if !self.run.slowdown.is_empty() {
            schedule.slowdown = self.run.slowdown.clone();
        }
        if self.run.activity < 1.0 {
            schedule.active = ActiveSetRule::Random { activity: self.run.activity, seed: shift };
        }
        Ok(schedule)
    }
}
