//! Solver configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    OneLevel,
    #[default]
    TwoLevelMult,
    TwoLevelAdd,
}

impl Scheme {
    pub fn is_two_level(self) -> bool {
        !matches!(self, Scheme::OneLevel)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "one_level" => Ok(Scheme::OneLevel),
            "mult" | "two_level_mult" => Ok(Scheme::TwoLevelMult),
            "add" | "two_level_add" => Ok(Scheme::TwoLevelAdd),
            _ => Err(Error::InvalidConfig(format!("scheme: unknown value '{s}' (one|mult|add)"))),
        }
    }
}

/// Where the coarse problem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseLayout {
    /// Every process gathers all coarse residual parts and solves.
    #[default]
    Replicated,
    /// A root gathers, solves and broadcasts.
    Centralized,
}

impl FromStr for CoarseLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replicated" => Ok(CoarseLayout::Replicated),
            "centralized" => Ok(CoarseLayout::Centralized),
            _ => Err(Error::InvalidConfig(format!("layout: unknown value '{s}' (replicated|centralized)"))),
        }
    }
}

/// Maximum number of times one coarse solution may be applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Zeta {
    Finite(u32),
    #[default]
    Infinite,
}

impl Zeta {
    pub fn allows(self, applied: u32) -> bool {
        match self {
            Zeta::Finite(z) => applied < z,
            Zeta::Infinite => true,
        }
    }
}

impl fmt::Display for Zeta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Zeta::Finite(z) => write!(f, "{z}"),
            Zeta::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Zeta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inf" || s == "infinite" {
            return Ok(Zeta::Infinite);
        }
        match s.parse::<u32>() {
            Ok(z) if z >= 1 => Ok(Zeta::Finite(z)),
            _ => Err(Error::InvalidConfig(format!("zeta: expected a positive integer or 'inf', got '{s}'"))),
        }
    }
}

impl Serialize for Zeta {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Zeta::Finite(z) => serializer.serialize_u32(*z),
            Zeta::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Zeta {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(i64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(z) if z >= 1 && z <= i64::from(u32::MAX) => Ok(Zeta::Finite(z as u32)),
            Raw::Count(z) => Err(serde::de::Error::custom(format!("zeta must be at least 1, got {z}"))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Solver used for local or coarse systems.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolverKind {
    #[default]
    Lu,
    Cg { tol: f64 },
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "lu" {
            return Ok(SolverKind::Lu);
        }
        if let Some(tol) = s.strip_prefix("cg:") {
            return match tol.parse::<f64>() {
                Ok(tol) if tol > 0.0 && tol.is_finite() => Ok(SolverKind::Cg { tol }),
                _ => Err(Error::InvalidConfig(format!("solver: bad CG tolerance '{tol}'"))),
            };
        }
        Err(Error::InvalidConfig(format!("solver: unknown value '{s}' (lu|cg:TOL)")))
    }
}

/// Coarse right-hand-side construction under asynchrony.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsyncMode {
    /// Snapshot of `x` first, then exchange of coarse residual parts.
    #[default]
    #[serde(rename = "xtau", alias = "x_tau")]
    XTau,
    /// Coarse residual parts computed from whatever data is at hand.
    Tau,
}

impl FromStr for IsyncMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xtau" => Ok(IsyncMode::XTau),
            "tau" => Ok(IsyncMode::Tau),
            _ => Err(Error::InvalidConfig(format!("isync: unknown value '{s}' (xtau|tau)"))),
        }
    }
}

/// What each process feeds into the asynchronous stopping reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopTest {
    /// Residual of a snapshot of `x` taken together with its neighbours, so
    /// the reduced norm is `||b - A x||` of one global vector.
    #[default]
    Snapshot,
    /// Residual of the current local vector against whatever neighbour data
    /// is at hand. Cheaper, but a process that solved against stale data
    /// reports a residual near zero (exactly zero without overlap).
    Local,
}

impl FromStr for StopTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snapshot" => Ok(StopTest::Snapshot),
            "local" => Ok(StopTest::Local),
            _ => Err(Error::InvalidConfig(format!("stop_test: unknown value '{s}' (snapshot|local)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub layout: CoarseLayout,
    /// Damping of the coarse correction.
    pub theta: f64,
    pub zeta: Zeta,
    /// Stopping threshold on the residual 2-norm.
    pub epsilon: f64,
    /// Iteration limit (per process for asynchronous runs).
    pub k_max: usize,
    pub local_solver: SolverKind,
    pub coarse_solver: SolverKind,
    pub isync: IsyncMode,
    /// Asynchronous stopping test; the synchronous solver ignores it.
    pub stop_test: StopTest,
    /// Reception slots per neighbour.
    pub recv_slots: usize,
    /// Root process of the centralized layout.
    pub root: usize,
    /// Abort when the residual exceeds this multiple of the initial one.
    pub divergence_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::TwoLevelMult,
            layout: CoarseLayout::Replicated,
            theta: 1.0,
            zeta: Zeta::Infinite,
            epsilon: 1e-6,
            k_max: 10_000,
            local_solver: SolverKind::Lu,
            coarse_solver: SolverKind::Lu,
            isync: IsyncMode::XTau,
            stop_test: StopTest::Snapshot,
            recv_slots: 1,
            root: 0,
            divergence_factor: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn one_level() -> Self {
        Self { scheme: Scheme::OneLevel, ..Self::default() }
    }

    /// `theta = 0` is accepted: it disables the coarse correction.
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidConfig(format!("theta: must be finite and >= 0, got {}", self.theta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon: must be positive, got {}", self.epsilon)));
        }
        if let Zeta::Finite(0) = self.zeta {
            return Err(Error::InvalidConfig("zeta: must be at least 1".into()));
        }
        for (name, kind) in [("local_solver", self.local_solver), ("coarse_solver", self.coarse_solver)] {
            if let SolverKind::Cg { tol } = kind {
                if !(tol > 0.0 && tol.is_finite()) {
                    return Err(Error::InvalidConfig(format!("{name}: CG tolerance must be positive")));
                }
            }
        }
        if self.recv_slots == 0 {
            return Err(Error::InvalidConfig("recv_slots: must be at least 1".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::InvalidConfig("divergence_factor: must exceed 1".into()));
        }
        Ok(())
    }
}
