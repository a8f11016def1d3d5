//! Messages and per-process reception state.

use std::collections::{BTreeMap, VecDeque};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Payload {
    /// Interface values of the sender's current iterate.
    Interface(Vec<f64>),
    /// Interface values of the sender's snapshot for coarse round `epoch`.
    Snapshot { epoch: u64, values: Vec<f64> },
    /// The sender's contribution to the coarse right-hand side.
    CoarsePart { epoch: u64, values: Vec<f64> },
    /// Coarse solution broadcast by the root.
    CoarseSolution { epoch: u64, values: Vec<f64> },
    /// Interface values of the sender's snapshot for stopping round `round`.
    ResidualSnapshot { round: u64, values: Vec<f64> },
    /// Contribution to the residual norm reduction.
    Reduce { epoch: u64, value: f64 },
    /// An interface send was matched by a posted reception.
    Ack,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Envelope {
    pub from: usize,
    pub to: usize,
    pub payload: Payload,
}

/// Reception side of one process.
///
/// Interface messages go into one of `slots` posted receptions per source;
/// extra arrivals wait unmatched until a slot frees up, so their senders stay
/// blocked. Collective payloads are keyed by round.
#[derive(Debug)]
pub(crate) struct Inbox {
    slots: usize,
    p: usize,
    link_of_peer: Vec<Option<usize>>,
    matched: Vec<VecDeque<Vec<f64>>>,
    waiting: Vec<VecDeque<Vec<f64>>>,
    snapshots: BTreeMap<u64, Vec<Option<Vec<f64>>>>,
    residual_snapshots: BTreeMap<u64, Vec<Option<Vec<f64>>>>,
    parts: BTreeMap<u64, Vec<Option<Vec<f64>>>>,
    solutions: BTreeMap<u64, Vec<f64>>,
    reductions: BTreeMap<u64, Vec<Option<f64>>>,
}

impl Inbox {
    /// `source_peers[l]` is the rank behind source link `l`.
    pub fn new(source_peers: &[usize], p: usize, slots: usize) -> Self {
        let mut link_of_peer = vec![None; p];
        for (l, &peer) in source_peers.iter().enumerate() {
            link_of_peer[peer] = Some(l);
        }
        let nl = source_peers.len();
        Self {
            slots,
            p,
            link_of_peer,
            matched: vec![VecDeque::new(); nl],
            waiting: vec![VecDeque::new(); nl],
            snapshots: BTreeMap::new(),
            residual_snapshots: BTreeMap::new(),
            parts: BTreeMap::new(),
            solutions: BTreeMap::new(),
            reductions: BTreeMap::new(),
        }
    }

    /// Posted interface receptions not yet matched.
    #[cfg(test)]
    pub fn free_slots(&self) -> usize {
        self.matched.iter().map(|q| self.slots - q.len()).sum()
    }

    /// Stores an arrived message. Returns true when it is an interface message
    /// that was matched right away (its sender must be acknowledged).
    pub fn deliver(&mut self, from: usize, payload: Payload) -> bool {
        match payload {
            Payload::Interface(values) => {
                let link = self.link_of_peer[from].expect("interface message from a non-neighbour");
                if self.matched[link].len() < self.slots {
                    self.matched[link].push_back(values);
                    true
                } else {
                    self.waiting[link].push_back(values);
                    false
                }
            }
            Payload::Snapshot { epoch, values } => {
                let link = self.link_of_peer[from].expect("snapshot from a non-neighbour");
                let nl = self.matched.len();
                self.snapshots.entry(epoch).or_insert_with(|| vec![None; nl])[link] = Some(values);
                false
            }
            Payload::ResidualSnapshot { round, values } => {
                let link = self.link_of_peer[from].expect("snapshot from a non-neighbour");
                let nl = self.matched.len();
                self.residual_snapshots.entry(round).or_insert_with(|| vec![None; nl])[link] = Some(values);
                false
            }
            Payload::CoarsePart { epoch, values } => {
                let p = self.p;
                self.parts.entry(epoch).or_insert_with(|| vec![None; p])[from] = Some(values);
                false
            }
            Payload::CoarseSolution { epoch, values } => {
                self.solutions.insert(epoch, values);
                false
            }
            Payload::Reduce { epoch, value } => {
                let p = self.p;
                self.reductions.entry(epoch).or_insert_with(|| vec![None; p])[from] = Some(value);
                false
            }
            Payload::Ack => unreachable!("acks are handled by the sender"),
        }
    }

    /// Completed receptions on `link`, oldest first. Waiting messages are
    /// matched into the freed slots; the returned count is how many of them
    /// were matched (each needs an acknowledgement).
    pub fn take_interface(&mut self, link: usize) -> (Vec<Vec<f64>>, usize) {
        let got: Vec<Vec<f64>> = self.matched[link].drain(..).collect();
        let mut refilled = 0;
        while self.matched[link].len() < self.slots {
            match self.waiting[link].pop_front() {
                Some(v) => {
                    self.matched[link].push_back(v);
                    refilled += 1;
                }
                None => break,
            }
        }
        (got, refilled)
    }

    /// All neighbour snapshots of coarse round `epoch`, once complete.
    pub fn take_snapshots(&mut self, epoch: u64) -> Option<Vec<Vec<f64>>> {
        take_complete(&mut self.snapshots, epoch, self.matched.len())
    }

    /// All neighbour snapshots of stopping round `round`, once complete.
    pub fn take_residual_snapshots(&mut self, round: u64) -> Option<Vec<Vec<f64>>> {
        take_complete(&mut self.residual_snapshots, round, self.matched.len())
    }

    /// All `p` coarse parts of round `epoch` in rank order, once complete.
    pub fn take_parts(&mut self, epoch: u64) -> Option<Vec<Vec<f64>>> {
        let ready = self.parts.get(&epoch).is_some_and(|v| v.iter().all(Option::is_some));
        if !ready {
            return None;
        }
        self.parts.remove(&epoch).map(|v| v.into_iter().map(Option::unwrap).collect())
    }

    pub fn take_solution(&mut self, epoch: u64) -> Option<Vec<f64>> {
        self.solutions.remove(&epoch)
    }

    /// Sum of all contributions of reduction `epoch` in rank order.
    pub fn take_reduction(&mut self, epoch: u64) -> Option<f64> {
        let ready = self.reductions.get(&epoch).is_some_and(|v| v.iter().all(Option::is_some));
        if !ready {
            return None;
        }
        self.reductions.remove(&epoch).map(|v| v.into_iter().fold(0.0, |acc, x| acc + x.unwrap()))
    }
}

fn take_complete(map: &mut BTreeMap<u64, Vec<Option<Vec<f64>>>>, key: u64, links: usize) -> Option<Vec<Vec<f64>>> {
    if links == 0 {
        return Some(Vec::new());
    }
    if !map.get(&key).is_some_and(|v| v.iter().all(Option::is_some)) {
        return None;
    }
    map.remove(&key).map(|v| v.into_iter().map(Option::unwrap).collect())
}
