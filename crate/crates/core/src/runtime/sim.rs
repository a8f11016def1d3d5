//! Deterministic discrete-event simulator.
//!
//! Time advances in integer ticks. At each tick the eligible processes (not
//! slowed down, picked by the active-set rule) run one local iteration,
//! stage by stage; messages are delivered at the start of the tick and after
//! every stage once their arrival tick is reached. Links are FIFO.

use std::collections::{BTreeMap, HashMap};

use super::delay::{ActivityPicker, DelaySchedule, LatencySampler};
use super::mailbox::{Envelope, Payload};
use super::trace::TraceEvent;
use super::worker::{Worker, WorkerOptions, STAGES};
use super::{build_outcome, check_inputs, AsyncOutcome};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::report::Engine;
use crate::schwarz::SchwarzSetup;

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub record_iterates: bool,
    /// Keep snapshot parts and coarse right-hand sides.
    pub record_coarse: bool,
    pub trace: bool,
    /// Tick budget; a run still going after it fails with `Deadlock`.
    pub max_ticks: Option<u64>,
}

struct Network {
    sampler: LatencySampler,
    queue: BTreeMap<(u64, u64), Envelope>,
    seq: u64,
    last_arrival: HashMap<(usize, usize), u64>,
}

impl Network {
    fn send(&mut self, now: u64, envelope: Envelope, workers: &mut [Worker<'_>]) {
        if envelope.payload == Payload::Ack {
            workers[envelope.to].deliver(envelope);
            return;
        }
        let link = (envelope.from, envelope.to);
        let mut arrival = now + self.sampler.latency(envelope.from, envelope.to);
        let last = self.last_arrival.entry(link).or_insert(0);
        arrival = arrival.max(*last);
        *last = arrival;
        self.queue.insert((arrival, self.seq), envelope);
        self.seq += 1;
    }

    fn deliver(&mut self, now: u64, workers: &mut [Worker<'_>]) {
        while let Some(entry) = self.queue.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let envelope = entry.remove();
            if let Some(ack) = workers[envelope.to].deliver(envelope) {
                workers[ack.to].deliver(ack);
            }
        }
    }
}

fn default_budget(config: &SolverConfig, schedule: &DelaySchedule, p: usize) -> u64 {
    let slow = (0..p).map(|r| schedule.slowdown_of(r)).fold(1.0, f64::max).ceil() as u64;
    let per_iteration = (slow + 1) * (u64::from(schedule.skip_bound) + 1);
    (config.k_max as u64 + 2)
        .saturating_mul(per_iteration)
        .saturating_add(schedule.max_delay().saturating_mul(8))
        .saturating_add(1000)
}

/// Runs the asynchronous iteration under `schedule`.
pub fn simulate(
    setup: &SchwarzSetup,
    config: &SolverConfig,
    schedule: &DelaySchedule,
    options: SimOptions,
) -> Result<AsyncOutcome> {
    check_inputs(setup, config)?;
    let p = setup.num_subdomains();
    schedule.validate(p)?;
    let worker_options = WorkerOptions {
        record_iterates: options.record_iterates,
        record_coarse: options.record_coarse,
        trace: options.trace,
    };
    let slowdown: Vec<f64> = (0..p).map(|r| schedule.slowdown_of(r)).collect();
    let mut workers: Vec<Worker<'_>> =
        (0..p).map(|r| Worker::new(setup, config, r, slowdown[r], worker_options)).collect();
    let mut net = Network {
        sampler: LatencySampler::new(&schedule.mode),
        queue: BTreeMap::new(),
        seq: 0,
        last_arrival: HashMap::new(),
    };
    let mut picker = ActivityPicker::new(schedule.active, schedule.skip_bound, p);
    let budget = options.max_ticks.unwrap_or_else(|| default_budget(config, schedule, p));
    let mut next_time = vec![0.0f64; p];
    let mut trace = Vec::new();

    for r in 0..p {
        for envelope in workers[r].take_outbox() {
            net.send(0, envelope, &mut workers);
        }
    }
    let mut tick = 0u64;
    loop {
        net.deliver(tick, &mut workers);
        let now = tick as f64;
        let active: Vec<usize> = (0..p)
            .filter(|&r| workers[r].stopped().is_none() && next_time[r] <= now)
            .filter(|&r| picker.pick(r))
            .collect();
        for &r in &active {
            next_time[r] = (next_time[r] + slowdown[r]).max(now + 1.0);
        }
        for stage in STAGES {
            for &r in &active {
                workers[r].run_stage(stage)?;
                for envelope in workers[r].take_outbox() {
                    net.send(tick, envelope, &mut workers);
                }
            }
            net.deliver(tick, &mut workers);
        }
        if options.trace {
            for w in workers.iter_mut() {
                trace.extend(w.take_events().into_iter().map(|e| TraceEvent {
                    time: tick,
                    rank: e.rank,
                    kind: e.kind.to_string(),
                    detail: e.detail,
                }));
            }
        }
        if workers.iter().all(|w| w.stopped().is_some()) {
            break;
        }
        tick += 1;
        if tick > budget {
            return Err(Error::Deadlock { tick });
        }
    }

    let results = workers.into_iter().map(Worker::finish).collect();
    let mut outcome = build_outcome(setup, config, Engine::Simulator, results, options.record_iterates);
    outcome.report.sim_ticks = Some(tick + 1);
    outcome.trace = trace;
    outcome.max_skipped = picker.max_skipped;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CoarseLayout, Scheme, Zeta};
    use crate::decomposition::{partition_box, CoarseKind};
    use crate::problem::{assemble_poisson, PoissonSpec};
    use crate::runtime::delay::{DelayMode, DelayScript, LinkDelay};
    use crate::runtime::mailbox::Payload;
    use crate::runtime::worker::Stage;
    use crate::config::StopTest;
    use crate::runtime::StopReason;
    use crate::sync::solve_sync;

    fn setup(cells: [usize; 3], procs: [usize; 3], config: &SolverConfig) -> SchwarzSetup {
        let (a, b) = assemble_poisson(&PoissonSpec::new(cells)).unwrap();
        let d = partition_box(cells, procs, 1).unwrap();
        SchwarzSetup::new(a, b, d, config, CoarseKind::Aggregation).unwrap()
    }

    #[test]
    fn zero_delay_matches_sync_bitwise() {
        let config = SolverConfig { epsilon: 1e-8, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let sync = solve_sync(&s, &config, true).unwrap();
        let options = SimOptions { record_iterates: true, ..SimOptions::default() };
        let sim = simulate(&s, &config, &DelaySchedule::zero(), options).unwrap();
        let sync_it = sync.iterates.unwrap();
        let sim_it = sim.iterates.unwrap();
        for (k, step) in sync_it.iter().enumerate() {
            for (rank, local) in step.iter().enumerate() {
                assert_eq!(local, &sim_it[rank][k], "iteration {k} rank {rank}");
            }
        }
        assert_eq!(sim.report.residual_history, sync.report.residual_history);
        assert_eq!(sim.report.iterations, sync.report.iterations + 1.0);
        assert!(sim.report.converged);
    }

    #[test]
    fn isync_completes_after_slowest_source() {
        let config = SolverConfig::default();
        let s = setup([6, 6, 2], [2, 2, 1], &config);
        let script = DelayScript {
            default: 3,
            links: (1..4).map(|r| LinkDelay { from: r, to: 0, ticks: r as u64 }).collect(),
            ..DelayScript::default()
        };
        let options = SimOptions { trace: true, max_ticks: Some(20), ..SimOptions::default() };
        let config = SolverConfig { k_max: 10, ..config };
        let out = simulate(&s, &config, &DelaySchedule::script(script), options).unwrap();
        let at = |kind: &str| out.trace.iter().find(|e| e.rank == 0 && e.kind == kind && e.detail == "0").unwrap().time;
        assert_eq!(at("coarse_start"), 3);
        assert_eq!(at("snapshot_complete"), 3 + 3);
    }

    #[test]
    fn receptions_posted_per_slot() {
        let config = SolverConfig { recv_slots: 3, ..SolverConfig::default() };
        let s = setup([6, 6, 2], [2, 2, 1], &config);
        let w = Worker::new(&s, &config, 0, 1.0, WorkerOptions::default());
        assert_eq!(w.free_slots(), 3 * 3);
    }

    #[test]
    fn newest_interface_value_wins() {
        let config = SolverConfig { recv_slots: 3, scheme: Scheme::OneLevel, ..SolverConfig::default() };
        let s = setup([6, 2, 2], [2, 1, 1], &config);
        let mut w = Worker::new(&s, &config, 0, 1.0, WorkerOptions::default());
        w.deliver(Envelope { from: 1, to: 0, payload: Payload::Reduce { epoch: 0, value: 1.0 } });
        w.run_stage(Stage::Begin).unwrap();
        let len = s.subdomain(0).sources()[0].positions.len();
        for v in 1..=3 {
            let ack = w.deliver(Envelope { from: 1, to: 0, payload: Payload::Interface(vec![f64::from(v); len]) });
            assert!(ack.is_some());
        }
        assert!(w.deliver(Envelope { from: 1, to: 0, payload: Payload::Interface(vec![9.0; len]) }).is_none());
        w.run_stage(Stage::UpdateRecv).unwrap();
        assert_eq!(w.state_views()[0], vec![3.0; len]);
        // the waiting message was matched and acknowledged
        let acks = w.take_outbox().into_iter().filter(|e| e.payload == Payload::Ack).count();
        assert_eq!(acks, 1);
    }

    #[test]
    fn zeta_one_uses_each_solution_once() {
        let config = SolverConfig { zeta: Zeta::Finite(1), ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let out = simulate(&s, &config, &DelaySchedule::fixed(5), SimOptions::default()).unwrap();
        for p in &out.report.processes {
            assert_eq!(p.max_corrections_per_install, 1);
            assert!(p.corrections <= p.coarse_installs);
        }
        let h = &out.report.residual_history;
        assert!(out.report.converged, "{:?} {:?}", out.stops, &h[h.len() - 5..]);
    }

    #[test]
    fn slow_root_in_centralized_layout() {
        let config = SolverConfig { layout: CoarseLayout::Centralized, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let schedule = DelaySchedule::fixed(1).with_slowdown(vec![4.0]);
        let out = simulate(&s, &config, &schedule, SimOptions::default()).unwrap();
        assert!(out.report.converged, "{:?}", out.stops);
        let procs = &out.report.processes;
        assert!(procs[1].iterations > procs[0].iterations);
        assert!(procs[1].max_corrections_per_install > 1);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let config = SolverConfig::default();
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let schedule = DelaySchedule::random(4, 11).with_slowdown(vec![1.0, 2.5, 1.0, 3.0]);
        let a = simulate(&s, &config, &schedule, SimOptions::default()).unwrap();
        let b = simulate(&s, &config, &schedule, SimOptions::default()).unwrap();
        assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
    }

    #[test]
    fn tick_budget_is_enforced() {
        let config = SolverConfig::default();
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let options = SimOptions { max_ticks: Some(2), ..SimOptions::default() };
        assert_eq!(simulate(&s, &config, &DelaySchedule::fixed(3), options).unwrap_err(), Error::Deadlock { tick: 3 });
    }

    #[test]
    fn iteration_limit_stops_everyone() {
        let config = SolverConfig { k_max: 4, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let out = simulate(&s, &config, &DelaySchedule::random(2, 1), SimOptions::default()).unwrap();
        assert!(out.stops.iter().all(|s| *s == Some(StopReason::IterationLimit)));
        assert!(!out.report.converged);
        assert!(out.report.processes.iter().all(|p| p.iterations == 4));
    }

    #[test]
    fn single_process_runs() {
        let config = SolverConfig::default();
        let s = setup([4, 4, 4], [1, 1, 1], &config);
        let out = simulate(&s, &config, &DelaySchedule::zero(), SimOptions::default()).unwrap();
        assert!(out.report.converged);
    }

    #[test]
    fn script_mode_is_deterministic_with_jitter() {
        let config = SolverConfig::default();
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let script = DelayScript { default: 1, jitter: 3, seed: 5, ..DelayScript::default() };
        let schedule = DelaySchedule { mode: DelayMode::Script(script), ..DelaySchedule::default() };
        let a = simulate(&s, &config, &schedule, SimOptions::default()).unwrap();
        let b = simulate(&s, &config, &schedule, SimOptions::default()).unwrap();
        assert_eq!(a.report, b.report);
    }

    #[test]
    fn snapshot_stop_test_sees_the_true_residual() {
        // without overlap a stale view can make the local estimate vanish
        let (a, b) = assemble_poisson(&PoissonSpec::new([6, 6, 4])).unwrap();
        let d = partition_box([6, 6, 4], [2, 2, 1], 0).unwrap();
        let mut outcomes = Vec::new();
        for stop_test in [StopTest::Snapshot, StopTest::Local] {
            let config = SolverConfig { stop_test, k_max: 3000, ..SolverConfig::default() };
            let s = SchwarzSetup::new(a.clone(), b.clone(), d.clone(), &config, CoarseKind::Aggregation).unwrap();
            let out = simulate(&s, &config, &DelaySchedule::fixed(2), SimOptions::default()).unwrap();
            outcomes.push(out.report);
        }
        let (snapshot, local) = (&outcomes[0], &outcomes[1]);
        assert!(snapshot.converged);
        assert!(snapshot.final_residual <= snapshot.epsilon);
        // the verbatim local estimate stops almost at once, far from the solution
        assert!(local.converged);
        assert!(local.final_residual > 1e3 * local.epsilon);
    }
}
