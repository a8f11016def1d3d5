//! One OS thread per process, exchanging messages over channels.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Instant;

use super::mailbox::Envelope;
use super::trace::TraceEvent;
use super::worker::{Worker, WorkerOptions, WorkerResult, STAGES};
use super::{build_outcome, check_inputs, AsyncOutcome};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::report::Engine;
use crate::schwarz::SchwarzSetup;

#[derive(Debug, Clone, Default)]
pub struct ThreadOptions {
    /// Per-process slowdown factors, emulated by sleeping after each
    /// iteration for `(factor - 1)` times its duration.
    pub slowdown: Vec<f64>,
    pub record_iterates: bool,
    pub trace: bool,
}

struct Shared<'a> {
    senders: Vec<Sender<Envelope>>,
    abort: &'a AtomicBool,
    start: Instant,
}

fn drain(worker: &mut Worker<'_>, inbox: &Receiver<Envelope>, shared: &Shared<'_>) {
    while let Ok(envelope) = inbox.try_recv() {
        if let Some(ack) = worker.deliver(envelope) {
            // A stopped receiver is fine to ignore.
            let _ = shared.senders[ack.to].send(ack);
        }
    }
}

fn run_worker(
    mut worker: Worker<'_>,
    inbox: Receiver<Envelope>,
    shared: Shared<'_>,
    slowdown: f64,
    trace: &mut Vec<TraceEvent>,
) -> Result<WorkerResult> {
    let flush = |worker: &mut Worker<'_>| {
        for envelope in worker.take_outbox() {
            let _ = shared.senders[envelope.to].send(envelope);
        }
    };
    flush(&mut worker);
    loop {
        if shared.abort.load(Ordering::Relaxed) {
            return Err(Error::Contract(format!("process {} aborted by a failing peer", worker.rank())));
        }
        drain(&mut worker, &inbox, &shared);
        if worker.stopped().is_some() {
            break;
        }
        let before = worker.iterations();
        let started = Instant::now();
        for stage in STAGES {
            drain(&mut worker, &inbox, &shared);
            if let Err(e) = worker.run_stage(stage) {
                shared.abort.store(true, Ordering::Relaxed);
                return Err(e);
            }
            flush(&mut worker);
        }
        let time = shared.start.elapsed().as_micros() as u64;
        trace.extend(worker.take_events().into_iter().map(|e| TraceEvent {
            time,
            rank: e.rank,
            kind: e.kind.to_string(),
            detail: e.detail,
        }));
        if worker.iterations() > before && slowdown > 1.0 {
            std::thread::sleep(started.elapsed().mul_f64(slowdown - 1.0));
        } else {
            // Lets peers run when threads outnumber cores.
            std::thread::yield_now();
        }
    }
    Ok(worker.finish())
}

/// Runs the asynchronous iteration with one thread per process.
pub fn run_threads(setup: &SchwarzSetup, config: &SolverConfig, options: &ThreadOptions) -> Result<AsyncOutcome> {
    check_inputs(setup, config)?;
    let p = setup.num_subdomains();
    if options.slowdown.len() > p || options.slowdown.iter().any(|f| !(*f >= 1.0 && f.is_finite())) {
        return Err(Error::InvalidConfig("slowdown: need at most one finite factor >= 1 per process".into()));
    }
    let worker_options =
        WorkerOptions { record_iterates: options.record_iterates, record_coarse: false, trace: options.trace };
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..p).map(|_| channel()).unzip();
    let abort = AtomicBool::new(false);
    let start = Instant::now();
    let joined: Vec<Result<(WorkerResult, Vec<TraceEvent>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(rank, inbox)| {
                let slowdown = options.slowdown.get(rank).copied().unwrap_or(1.0);
                let shared = Shared { senders: senders.clone(), abort: &abort, start };
                scope.spawn(move || {
                    let worker = Worker::new(setup, config, rank, slowdown, worker_options);
                    let mut trace = Vec::new();
                    run_worker(worker, inbox, shared, slowdown, &mut trace).map(|r| (r, trace))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    let wall = start.elapsed().as_secs_f64();
    // Report the root failure rather than the aborts it caused.
    let failure = joined.iter().filter_map(|r| r.as_ref().err()).find(|e| !matches!(e, Error::Contract(_)));
    if let Some(e) = failure {
        return Err(e.clone());
    }
    let mut results = Vec::with_capacity(p);
    let mut trace = Vec::new();
    for r in joined {
        let (result, events) = r?;
        results.push(result);
        trace.extend(events);
    }
    trace.sort_by_key(|e| (e.time, e.rank));
    let mut outcome = build_outcome(setup, config, Engine::Threads, results, options.record_iterates);
    outcome.report.wall_seconds = Some(wall);
    outcome.trace = trace;
    Ok(outcome)
}
