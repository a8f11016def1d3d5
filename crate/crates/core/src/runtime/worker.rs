//! One asynchronous process: fine iteration, coarse state machine and
//! pipelined stopping test. Engines drive it stage by stage and move its
//! messages around.

use serde::{Deserialize, Serialize};

use super::mailbox::{Envelope, Inbox, Payload};
use crate::config::{CoarseLayout, IsyncMode, Scheme, SolverConfig, StopTest};
use crate::error::Result;
use crate::report::ProcessStats;
use crate::schwarz::{CoarseOperator, LocalState, SchwarzSetup, Subdomain};

/// Steps of one local iteration. Engines run a stage for every active
/// process and deliver pending messages before moving to the next stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    /// Stopping test, then coarse progress (may start a new round).
    Begin,
    /// Coarse progress without starting a new round.
    Coarse1,
    Coarse2,
    Coarse3,
    /// Multiplicative coarse correction and its interface send.
    Correct,
    CorrectRecv,
    /// Local solve and interface send.
    Update,
    /// Receive, residual, reduction bookkeeping.
    UpdateRecv,
}

pub(crate) const STAGES: [Stage; 8] = [
    Stage::Begin,
    Stage::Coarse1,
    Stage::Coarse2,
    Stage::Coarse3,
    Stage::Correct,
    Stage::CorrectRecv,
    Stage::Update,
    Stage::UpdateRecv,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    Diverged,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    /// Waiting for the initial blocking reduction.
    Init,
    Running,
    Stopped(StopReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Snapshot,
    Gather,
}

/// Local part of the snapshot taken for coarse round `epoch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub epoch: u64,
    pub rank: usize,
    pub x: Vec<f64>,
}

/// Right-hand side of one coarse solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseRecord {
    pub epoch: u64,
    pub rank: usize,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct WorkerOptions {
    pub record_iterates: bool,
    pub record_coarse: bool,
    pub trace: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WorkerEvent {
    pub rank: usize,
    pub kind: &'static str,
    pub detail: String,
}

#[derive(Debug)]
pub(crate) struct WorkerResult {
    pub x: Vec<f64>,
    pub stats: ProcessStats,
    pub history: Vec<f64>,
    pub stop: Option<StopReason>,
    pub iterates: Vec<Vec<f64>>,
    pub snapshots: Vec<SnapshotRecord>,
    pub coarse: Vec<CoarseRecord>,
}

pub(crate) struct Worker<'a> {
    rank: usize,
    p: usize,
    sd: &'a Subdomain,
    config: &'a SolverConfig,
    coarse: Option<&'a CoarseOperator>,
    options: WorkerOptions,
    slowdown: f64,
    state: LocalState,
    inbox: Inbox,
    outbox: Vec<Envelope>,
    dest_of_peer: Vec<Option<usize>>,
    send_busy: Vec<bool>,
    status: Status,
    // coarse round
    phase: Phase,
    epoch: u64,
    snapshot: Option<Vec<f64>>,
    solution: Option<Vec<f64>>,
    nbidentcorr: u32,
    corrected: bool,
    // stopping test
    norm: f64,
    initial_norm: f64,
    contribution: f64,
    /// Snapshot of `x` awaiting neighbour data before it can be reduced.
    stop_snapshot: Option<(u64, Vec<f64>)>,
    pending_reduction: Option<u64>,
    next_reduction: u64,
    history: Vec<f64>,
    // counters and logs
    iterations: usize,
    installs: usize,
    corrections: usize,
    max_corrections: u32,
    iterates: Vec<Vec<f64>>,
    snapshots: Vec<SnapshotRecord>,
    coarse_log: Vec<CoarseRecord>,
    events: Vec<WorkerEvent>,
}

impl<'a> Worker<'a> {
    /// Initial state: zero iterate, all receptions posted and the initial
    /// reduction started.
    pub fn new(setup: &'a SchwarzSetup, config: &'a SolverConfig, rank: usize, slowdown: f64, options: WorkerOptions) -> Self {
        let p = setup.num_subdomains();
        let sd = setup.subdomain(rank);
        let coarse = if config.scheme.is_two_level() { setup.coarse() } else { None };
        let source_peers: Vec<usize> = sd.sources().iter().map(|l| l.peer).collect();
        let mut dest_of_peer = vec![None; p];
        for (l, link) in sd.dests().iter().enumerate() {
            dest_of_peer[link.peer] = Some(l);
        }
        let state = sd.zero_state();
        let tau = sd.residual(&state.x, &state.views);
        let contribution = sd.weighted_norm2(&tau);
        let mut worker = Self {
            rank,
            p,
            sd,
            config,
            coarse,
            options,
            slowdown,
            state,
            inbox: Inbox::new(&source_peers, p, config.recv_slots),
            outbox: Vec::new(),
            dest_of_peer,
            send_busy: vec![false; sd.dests().len()],
            status: Status::Init,
            phase: Phase::Idle,
            epoch: 0,
            snapshot: None,
            solution: None,
            nbidentcorr: 0,
            corrected: false,
            norm: f64::INFINITY,
            initial_norm: f64::NAN,
            contribution,
            stop_snapshot: None,
            pending_reduction: None,
            next_reduction: 0,
            history: Vec::new(),
            iterations: 0,
            installs: 0,
            corrections: 0,
            max_corrections: 0,
            iterates: Vec::new(),
            snapshots: Vec::new(),
            coarse_log: Vec::new(),
            events: Vec::new(),
        };
        worker.start_reduction();
        worker
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn stopped(&self) -> Option<StopReason> {
        match self.status {
            Status::Stopped(r) => Some(r),
            _ => None,
        }
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Interface receptions currently posted and unmatched.
    #[cfg(test)]
    pub fn free_slots(&self) -> usize {
        self.inbox.free_slots()
    }

    #[cfg(test)]
    pub fn state_views(&self) -> &[Vec<f64>] {
        &self.state.views
    }

    pub fn take_outbox(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    pub fn take_events(&mut self) -> Vec<WorkerEvent> {
        std::mem::take(&mut self.events)
    }

    /// Hands an arrived message to this process. Returns the acknowledgement
    /// to route back when an interface message was matched.
    pub fn deliver(&mut self, envelope: Envelope) -> Option<Envelope> {
        if envelope.payload == Payload::Ack {
            self.on_ack(envelope.from);
            return None;
        }
        let from = envelope.from;
        self.inbox
            .deliver(from, envelope.payload)
            .then(|| Envelope { from: self.rank, to: from, payload: Payload::Ack })
    }

    fn on_ack(&mut self, peer: usize) {
        if let Some(l) = self.dest_of_peer[peer] {
            self.send_busy[l] = false;
        }
    }

    fn post(&mut self, to: usize, payload: Payload) {
        if to == self.rank {
            self.inbox.deliver(to, payload);
        } else {
            self.outbox.push(Envelope { from: self.rank, to, payload });
        }
    }

    fn event(&mut self, kind: &'static str, detail: String) {
        if self.options.trace {
            self.events.push(WorkerEvent { rank: self.rank, kind, detail });
        }
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        match self.status {
            Status::Stopped(_) => return Ok(()),
            Status::Init => {
                if stage != Stage::Begin {
                    return Ok(());
                }
                let Some(sum) = self.inbox.take_reduction(0) else { return Ok(()) };
                self.norm = sum.sqrt();
                self.initial_norm = self.norm;
                self.history.push(self.norm);
                self.pending_reduction = None;
                self.status = Status::Running;
            }
            Status::Running => {}
        }
        self.finish_stop_snapshot();
        match stage {
            Stage::Begin => {
                if let Some(reason) = self.stop_reason() {
                    self.status = Status::Stopped(reason);
                    self.event("stop", format!("{reason:?} after {} iterations", self.iterations));
                    return Ok(());
                }
                self.coarse_progress(true)
            }
            Stage::Coarse1 | Stage::Coarse2 | Stage::Coarse3 => self.coarse_progress(false),
            Stage::Correct => {
                if self.config.scheme == Scheme::TwoLevelMult && self.apply_coarse_correction() {
                    self.send_interface();
                    self.corrected = true;
                }
                Ok(())
            }
            Stage::CorrectRecv => {
                if std::mem::take(&mut self.corrected) {
                    self.receive();
                }
                Ok(())
            }
            Stage::Update => {
                let tau = self.sd.residual(&self.state.x, &self.state.views);
                let delta = self.sd.local_solve(&tau)?;
                if self.config.scheme == Scheme::TwoLevelAdd {
                    self.apply_coarse_correction();
                }
                self.state.x.iter_mut().zip(&delta).for_each(|(x, d)| *x += d);
                self.send_interface();
                Ok(())
            }
            Stage::UpdateRecv => {
                self.receive();
                self.iterations += 1;
                if self.options.record_iterates {
                    self.iterates.push(self.state.x.clone());
                }
                let ready = match self.pending_reduction {
                    None => self.stop_snapshot.is_none(),
                    Some(e) => match self.inbox.take_reduction(e) {
                        Some(sum) => {
                            self.norm = sum.sqrt();
                            self.history.push(self.norm);
                            self.event("reduce", format!("round {e} norm {:e}", self.norm));
                            self.pending_reduction = None;
                            true
                        }
                        None => false,
                    },
                };
                if ready {
                    self.begin_contribution();
                }
                self.event("iteration", self.iterations.to_string());
                Ok(())
            }
        }
    }

    fn stop_reason(&self) -> Option<StopReason> {
        if self.norm <= self.config.epsilon {
            Some(StopReason::Converged)
        } else if !self.norm.is_finite() || self.norm > self.config.divergence_factor * self.initial_norm {
            Some(StopReason::Diverged)
        } else if self.iterations >= self.config.k_max {
            Some(StopReason::IterationLimit)
        } else {
            None
        }
    }

    /// Starts the next stopping round from the current iterate.
    fn begin_contribution(&mut self) {
        match self.config.stop_test {
            StopTest::Local => {
                let tau = self.sd.residual(&self.state.x, &self.state.views);
                self.contribution = self.sd.weighted_norm2(&tau);
                self.start_reduction();
            }
            StopTest::Snapshot => {
                let round = self.next_reduction;
                for l in 0..self.sd.dests().len() {
                    let peer = self.sd.dests()[l].peer;
                    let values = self.sd.outgoing(l, &self.state.x);
                    self.post(peer, Payload::ResidualSnapshot { round, values });
                }
                self.stop_snapshot = Some((round, self.state.x.clone()));
                self.finish_stop_snapshot();
            }
        }
    }

    /// Reduces the snapshot residual once all neighbour parts are in.
    fn finish_stop_snapshot(&mut self) {
        let Some((round, _)) = &self.stop_snapshot else { return };
        let Some(views) = self.inbox.take_residual_snapshots(*round) else { return };
        let (_, x) = self.stop_snapshot.take().expect("checked above");
        let tau = self.sd.residual(&x, &views);
        self.contribution = self.sd.weighted_norm2(&tau);
        self.start_reduction();
    }

    fn start_reduction(&mut self) {
        let epoch = self.next_reduction;
        self.next_reduction += 1;
        self.pending_reduction = Some(epoch);
        for r in 0..self.p {
            self.post(r, Payload::Reduce { epoch, value: self.contribution });
        }
    }

    /// `x += theta R R~^T y` with the installed solution, if allowed.
    fn apply_coarse_correction(&mut self) -> bool {
        let (Some(coarse), Some(y)) = (self.coarse, self.solution.as_ref()) else { return false };
        if !self.config.zeta.allows(self.nbidentcorr) {
            return false;
        }
        self.sd.apply_correction(&mut self.state.x, coarse, y, self.config.theta);
        self.nbidentcorr += 1;
        self.corrections += 1;
        self.max_corrections = self.max_corrections.max(self.nbidentcorr);
        self.event("correction", format!("round {} use {}", self.epoch.saturating_sub(1), self.nbidentcorr));
        true
    }

    /// Sends the current interface values to every neighbour whose previous
    /// message has been matched; the others are skipped.
    fn send_interface(&mut self) {
        for l in 0..self.send_busy.len() {
            let peer = self.sd.dests()[l].peer;
            if self.send_busy[l] {
                self.event("send_skipped", peer.to_string());
                continue;
            }
            let values = self.sd.outgoing(l, &self.state.x);
            self.post(peer, Payload::Interface(values));
            self.send_busy[l] = true;
        }
    }

    /// Takes every completed reception; the newest value of each link wins.
    fn receive(&mut self) {
        for l in 0..self.state.views.len() {
            let (got, refilled) = self.inbox.take_interface(l);
            if let Some(last) = got.into_iter().last() {
                self.state.views[l] = last;
            }
            let peer = self.sd.sources()[l].peer;
            for _ in 0..refilled {
                self.outbox.push(Envelope { from: self.rank, to: peer, payload: Payload::Ack });
            }
        }
    }

    fn coarse_progress(&mut self, allow_start: bool) -> Result<()> {
        let Some(coarse) = self.coarse else { return Ok(()) };
        if self.phase == Phase::Idle && allow_start {
            self.event("coarse_start", self.epoch.to_string());
            match self.config.isync {
                IsyncMode::XTau => {
                    let snap = self.state.x.clone();
                    for l in 0..self.sd.dests().len() {
                        let peer = self.sd.dests()[l].peer;
                        let values = self.sd.outgoing(l, &snap);
                        self.post(peer, Payload::Snapshot { epoch: self.epoch, values });
                    }
                    if self.options.record_coarse {
                        self.snapshots.push(SnapshotRecord { epoch: self.epoch, rank: self.rank, x: snap.clone() });
                    }
                    self.snapshot = Some(snap);
                    self.phase = Phase::Snapshot;
                }
                IsyncMode::Tau => {
                    let tau = self.sd.residual(&self.state.x, &self.state.views);
                    let part = self.sd.coarse_part(&tau, coarse);
                    self.send_part(part);
                    self.phase = Phase::Gather;
                }
            }
        }
        if self.phase == Phase::Snapshot {
            if let Some(views) = self.inbox.take_snapshots(self.epoch) {
                self.event("snapshot_complete", self.epoch.to_string());
                let snap = self.snapshot.take().expect("snapshot taken at round start");
                let tau = self.sd.residual(&snap, &views);
                let part = self.sd.coarse_part(&tau, coarse);
                self.send_part(part);
                self.phase = Phase::Gather;
            }
        }
        if self.phase == Phase::Gather {
            self.try_finish_round(coarse)?;
        }
        Ok(())
    }

    fn send_part(&mut self, part: Vec<f64>) {
        let epoch = self.epoch;
        match self.config.layout {
            CoarseLayout::Replicated => {
                for r in 0..self.p {
                    self.post(r, Payload::CoarsePart { epoch, values: part.clone() });
                }
            }
            CoarseLayout::Centralized => self.post(self.config.root, Payload::CoarsePart { epoch, values: part }),
        }
    }

    fn try_finish_round(&mut self, coarse: &CoarseOperator) -> Result<()> {
        let solves = match self.config.layout {
            CoarseLayout::Replicated => true,
            CoarseLayout::Centralized => self.rank == self.config.root,
        };
        if solves {
            let Some(parts) = self.inbox.take_parts(self.epoch) else { return Ok(()) };
            let rhs = coarse.sum_parts(parts.iter().map(Vec::as_slice));
            let y = coarse.solve(&rhs)?;
            if self.options.record_coarse {
                self.coarse_log.push(CoarseRecord { epoch: self.epoch, rank: self.rank, rhs });
            }
            if self.config.layout == CoarseLayout::Centralized {
                let me = self.rank;
                for r in (0..self.p).filter(|&r| r != me) {
                    self.post(r, Payload::CoarseSolution { epoch: self.epoch, values: y.clone() });
                }
            }
            self.install(y);
        } else if let Some(y) = self.inbox.take_solution(self.epoch) {
            self.install(y);
        }
        Ok(())
    }

    fn install(&mut self, y: Vec<f64>) {
        self.event("coarse_install", self.epoch.to_string());
        self.solution = Some(y);
        self.nbidentcorr = 0;
        self.installs += 1;
        self.phase = Phase::Idle;
        self.epoch += 1;
    }

    pub fn finish(self) -> WorkerResult {
        let stop = self.stopped();
        let stats = ProcessStats {
            rank: self.rank,
            iterations: self.iterations,
            coarse_installs: self.installs,
            corrections: self.corrections,
            max_corrections_per_install: self.max_corrections,
            slowdown: self.slowdown,
        };
        WorkerResult {
            x: self.state.x,
            stats,
            history: self.history,
            stop,
            iterates: self.iterates,
            snapshots: self.snapshots,
            coarse: self.coarse_log,
        }
    }
}
