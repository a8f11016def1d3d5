//! Programmable delays, active sets and slowdowns for the simulator.

use std::collections::HashMap;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latency of one message, in ticks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayMode {
    #[default]
    Zero,
    Fixed { ticks: u64 },
    /// Uniform in `0..=max_delay`.
    Random { max_delay: u64, seed: u64 },
    Script(DelayScript),
}

/// Per-link latencies loaded from JSON.
///
/// ```json
/// {"default": 1, "links": [{"from": 1, "to": 0, "ticks": 3}],
///  "slowdown": [1, 1, 4, 1], "jitter": 2, "seed": 7}
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayScript {
    #[serde(default)]
    pub default: u64,
    #[serde(default)]
    pub links: Vec<LinkDelay>,
    #[serde(default)]
    pub slowdown: Vec<f64>,
    /// Extra uniform latency in `0..=jitter` drawn from `seed`.
    #[serde(default)]
    pub jitter: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDelay {
    pub from: usize,
    pub to: usize,
    pub ticks: u64,
}

impl DelayScript {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("delay script: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Which eligible processes update at a tick.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActiveSetRule {
    #[default]
    All,
    /// Each eligible process runs with probability `activity`.
    Random { activity: f64, seed: u64 },
}

/// Full description of the asynchrony of a simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelaySchedule {
    pub mode: DelayMode,
    pub active: ActiveSetRule,
    /// Ticks per local iteration of each process (missing entries are 1).
    pub slowdown: Vec<f64>,
    /// Maximum consecutive ticks an eligible process may be left out.
    pub skip_bound: u32,
}

impl Default for DelaySchedule {
    fn default() -> Self {
        Self { mode: DelayMode::Zero, active: ActiveSetRule::All, slowdown: Vec::new(), skip_bound: 8 }
    }
}

impl DelaySchedule {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn fixed(ticks: u64) -> Self {
        Self { mode: DelayMode::Fixed { ticks }, ..Self::default() }
    }

    pub fn random(max_delay: u64, seed: u64) -> Self {
        Self { mode: DelayMode::Random { max_delay, seed }, ..Self::default() }
    }

    pub fn script(script: DelayScript) -> Self {
        let slowdown = script.slowdown.clone();
        Self { mode: DelayMode::Script(script), slowdown, ..Self::default() }
    }

    pub fn with_slowdown(mut self, slowdown: Vec<f64>) -> Self {
        self.slowdown = slowdown;
        self
    }

    pub fn with_active(mut self, active: ActiveSetRule) -> Self {
        self.active = active;
        self
    }

    /// Parses `zero`, `fixed:D`, `rand:MAX:SEED`, or a path to a JSON script.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("delays: cannot parse '{spec}'"));
        if spec == "zero" {
            return Ok(Self::zero());
        }
        if let Some(rest) = spec.strip_prefix("fixed:") {
            return Ok(Self::fixed(rest.parse().map_err(|_| bad())?));
        }
        if let Some(rest) = spec.strip_prefix("rand:") {
            let (max, seed) = rest.split_once(':').ok_or_else(bad)?;
            return Ok(Self::random(max.parse().map_err(|_| bad())?, seed.parse().map_err(|_| bad())?));
        }
        Ok(Self::script(DelayScript::load(Path::new(spec))?))
    }

    pub fn slowdown_of(&self, rank: usize) -> f64 {
        self.slowdown.get(rank).copied().unwrap_or(1.0)
    }

    /// Largest latency any message can get.
    pub fn max_delay(&self) -> u64 {
        match &self.mode {
            DelayMode::Zero => 0,
            DelayMode::Fixed { ticks } => *ticks,
            DelayMode::Random { max_delay, .. } => *max_delay,
            DelayMode::Script(s) => s.links.iter().map(|l| l.ticks).max().unwrap_or(0).max(s.default) + s.jitter,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.slowdown.len() > p {
            return Err(Error::InvalidConfig(format!("slowdown: {} entries for {p} processes", self.slowdown.len())));
        }
        if let Some(f) = self.slowdown.iter().find(|f| !(**f >= 1.0 && f.is_finite())) {
            return Err(Error::InvalidConfig(format!("slowdown: factors must be finite and >= 1, got {f}")));
        }
        if let ActiveSetRule::Random { activity, .. } = self.active {
            if !(activity > 0.0 && activity <= 1.0) {
                return Err(Error::InvalidConfig(format!("active: activity must be in (0, 1], got {activity}")));
            }
        }
        if let DelayMode::Script(s) = &self.mode {
            if let Some(l) = s.links.iter().find(|l| l.from >= p || l.to >= p) {
                return Err(Error::InvalidConfig(format!("delays: link {} -> {} out of range", l.from, l.to)));
            }
        }
        Ok(())
    }
}

/// Draws message latencies.
#[derive(Debug)]
pub(crate) struct LatencySampler {
    mode: DelayMode,
    links: HashMap<(usize, usize), u64>,
    rng: ChaCha8Rng,
}

impl LatencySampler {
    pub fn new(mode: &DelayMode) -> Self {
        let (links, seed) = match mode {
            DelayMode::Script(s) => (s.links.iter().map(|l| ((l.from, l.to), l.ticks)).collect(), s.seed),
            DelayMode::Random { seed, .. } => (HashMap::new(), *seed),
            _ => (HashMap::new(), 0),
        };
        Self { mode: mode.clone(), links, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn latency(&mut self, from: usize, to: usize) -> u64 {
        match &self.mode {
            DelayMode::Zero => 0,
            DelayMode::Fixed { ticks } => *ticks,
            DelayMode::Random { max_delay, .. } => self.rng.random_range(0..=*max_delay),
            DelayMode::Script(s) => {
                let base = self.links.get(&(from, to)).copied().unwrap_or(s.default);
                if s.jitter > 0 {
                    base + self.rng.random_range(0..=s.jitter)
                } else {
                    base
                }
            }
        }
    }
}

/// Chooses the active set of each tick.
#[derive(Debug)]
pub(crate) struct ActivityPicker {
    rule: ActiveSetRule,
    skip_bound: u32,
    rng: ChaCha8Rng,
    skipped: Vec<u32>,
    pub max_skipped: u32,
}

impl ActivityPicker {
    pub fn new(rule: ActiveSetRule, skip_bound: u32, p: usize) -> Self {
        let seed = match rule {
            ActiveSetRule::Random { seed, .. } => seed,
            ActiveSetRule::All => 0,
        };
        Self { rule, skip_bound, rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ac71), skipped: vec![0; p], max_skipped: 0 }
    }

    /// Whether eligible process `rank` runs this tick.
    pub fn pick(&mut self, rank: usize) -> bool {
        let run = match self.rule {
            ActiveSetRule::All => true,
            ActiveSetRule::Random { activity, .. } => {
                self.skipped[rank] >= self.skip_bound || self.rng.random::<f64>() < activity
            }
        };
        if run {
            self.skipped[rank] = 0;
        } else {
            self.skipped[rank] += 1;
            self.max_skipped = self.max_skipped.max(self.skipped[rank]);
        }
        run
    }
}
