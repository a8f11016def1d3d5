//! Synchronous one-level and two-level Schwarz iterations.

use crate::config::{Scheme, SolverConfig};
use crate::error::{Error, Result};
use crate::report::{Engine, ProcessStats, RunReport};
use crate::schwarz::{LocalState, SchwarzSetup};

/// Result of a synchronous run.
#[derive(Debug, Clone)]
pub struct SyncOutcome {
    pub x: Vec<f64>,
    pub report: RunReport,
    /// Local vectors after every iteration, when requested.
    pub iterates: Option<Vec<Vec<Vec<f64>>>>,
}

/// Runs the configured scheme from a zero initial guess.
pub fn solve_sync(setup: &SchwarzSetup, config: &SolverConfig, record_iterates: bool) -> Result<SyncOutcome> {
    let states: Vec<LocalState> = setup.subdomains().iter().map(|sd| sd.zero_state()).collect();
    solve_sync_from(setup, config, states, record_iterates)
}

/// One-level iteration; `config.scheme` must be `OneLevel`.
pub fn solve_one_level(setup: &SchwarzSetup, config: &SolverConfig) -> Result<SyncOutcome> {
    if config.scheme != Scheme::OneLevel {
        return Err(Error::InvalidConfig("scheme: one-level solver needs scheme one_level".into()));
    }
    solve_sync(setup, config, false)
}

/// Two-level iteration; `config.scheme` must be multiplicative or additive.
pub fn solve_two_level_sync(setup: &SchwarzSetup, config: &SolverConfig) -> Result<SyncOutcome> {
    if !config.scheme.is_two_level() {
        return Err(Error::InvalidConfig("scheme: two-level solver needs a two-level scheme".into()));
    }
    solve_sync(setup, config, false)
}

fn exchange(setup: &SchwarzSetup, states: &mut [LocalState]) {
    let snapshot: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
    for (sd, st) in setup.subdomains().iter().zip(states.iter_mut()) {
        for (link, view) in sd.sources().iter().zip(st.views.iter_mut()) {
            for (v, &pos) in view.iter_mut().zip(&link.positions) {
                *v = snapshot[link.peer][pos];
            }
        }
    }
}

/// `sqrt(sum_s tau_s^T W_s tau_s)`, summed in increasing `s`.
pub(crate) fn weighted_residual_norm(setup: &SchwarzSetup, taus: &[Vec<f64>]) -> f64 {
    setup
        .subdomains()
        .iter()
        .zip(taus)
        .fold(0.0, |acc, (sd, tau)| acc + sd.weighted_norm2(tau))
        .sqrt()
}

/// Runs from explicit local states (views are refreshed before use).
pub fn solve_sync_from(
    setup: &SchwarzSetup,
    config: &SolverConfig,
    mut states: Vec<LocalState>,
    record_iterates: bool,
) -> Result<SyncOutcome> {
    config.validate()?;
    let coarse = match (config.scheme.is_two_level(), setup.coarse()) {
        (true, Some(c)) => Some(c),
        (true, None) => return Err(Error::InvalidConfig("scheme: two-level run without a coarse space".into())),
        (false, _) => None,
    };
    let p = setup.num_subdomains();
    let mut history = Vec::new();
    let mut iterates = record_iterates.then(Vec::new);
    let mut k = 0usize;
    let mut initial = f64::NAN;
    let mut converged = false;
    let mut diverged = false;
    loop {
        exchange(setup, &mut states);
        let mut taus: Vec<Vec<f64>> =
            setup.subdomains().iter().zip(&states).map(|(sd, st)| sd.residual(&st.x, &st.views)).collect();
        let norm = weighted_residual_norm(setup, &taus);
        history.push(norm);
        if k == 0 {
            initial = norm;
        }
        if norm <= config.epsilon {
            converged = true;
            break;
        }
        if !norm.is_finite() || norm > config.divergence_factor * initial {
            diverged = true;
            break;
        }
        if k >= config.k_max {
            break;
        }
        match (config.scheme, coarse) {
            (Scheme::TwoLevelMult, Some(coarse)) => {
                let parts: Vec<Vec<f64>> =
                    setup.subdomains().iter().zip(&taus).map(|(sd, tau)| sd.coarse_part(tau, coarse)).collect();
                let y = coarse.solve(&coarse.sum_parts(parts.iter().map(Vec::as_slice)))?;
                for (sd, st) in setup.subdomains().iter().zip(states.iter_mut()) {
                    sd.apply_correction(&mut st.x, coarse, &y, config.theta);
                    sd.apply_view_correction(&mut st.views, coarse, &y, config.theta, setup);
                }
                for ((sd, st), tau) in setup.subdomains().iter().zip(&states).zip(taus.iter_mut()) {
                    *tau = sd.residual(&st.x, &st.views);
                }
                for ((sd, st), tau) in setup.subdomains().iter().zip(states.iter_mut()).zip(&taus) {
                    let delta = sd.local_solve(tau)?;
                    st.x.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
                }
            }
            (Scheme::TwoLevelAdd, Some(coarse)) => {
                let parts: Vec<Vec<f64>> =
                    setup.subdomains().iter().zip(&taus).map(|(sd, tau)| sd.coarse_part(tau, coarse)).collect();
                let y = coarse.solve(&coarse.sum_parts(parts.iter().map(Vec::as_slice)))?;
                for ((sd, st), tau) in setup.subdomains().iter().zip(states.iter_mut()).zip(&taus) {
                    let delta = sd.local_solve(tau)?;
                    sd.apply_correction(&mut st.x, coarse, &y, config.theta);
                    st.x.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
                }
            }
            _ => {
                for ((sd, st), tau) in setup.subdomains().iter().zip(states.iter_mut()).zip(&taus) {
                    let delta = sd.local_solve(tau)?;
                    st.x.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
                }
            }
        }
        k += 1;
        if let Some(it) = iterates.as_mut() {
            it.push(states.iter().map(|s| s.x.clone()).collect());
        }
    }
    let locals: Vec<Vec<f64>> = states.into_iter().map(|s| s.x).collect();
    let x = setup.assemble(&locals);
    let final_residual = setup.true_residual(&locals);
    let two_level = coarse.is_some();
    let processes = (0..p)
        .map(|rank| ProcessStats {
            rank,
            iterations: k,
            coarse_installs: if two_level { k } else { 0 },
            corrections: if two_level { k } else { 0 },
            max_corrections_per_install: u32::from(two_level && k > 0),
            slowdown: 1.0,
        })
        .collect();
    let mut report = RunReport {
        engine: Engine::Sync,
        scheme: config.scheme,
        layout: config.layout,
        isync: None,
        theta: config.theta,
        zeta: config.zeta,
        epsilon: config.epsilon,
        iterations: 0.0,
        coarse_solves: 0.0,
        identical_corrections_avg: 0.0,
        residual_history: history,
        final_residual,
        converged,
        diverged,
        sim_ticks: None,
        wall_seconds: None,
        processes,
    };
    report.finish_counts();
    Ok(SyncOutcome { x, report, iterates })
}
