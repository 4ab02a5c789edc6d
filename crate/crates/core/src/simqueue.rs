//! Event-driven simulation of the single-server FIFO queue shared by Willie's
//! Poisson stream and Alice's inserted jobs.
//!
//! Time 0 is treated as the end of busy period 0: the system starts empty
//! and Alice's end-of-busy-period or idle rule fires immediately. Under II-A
//! a batch is also drawn at time 0 as the leftover of a notional last
//! arrival, so the first cycle has the same law as every other one.

use alloc::collections::{BinaryHeap, VecDeque};
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;

use crate::analytics::{BatchPMF, SystemParams};
use crate::dists::exp_draw;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// Default abort threshold on jobs in system.
pub const RUNAWAY_GUARD: usize = 1_000_000;

/// Alice's insertion policy.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Policy {
    NoInsertion,
    /// One job with probability `q` at the end of each W-BP.
    #[cfg_attr(feature = "serde", serde(rename = "iebp"))]
    IEBP { q: f64 },
    /// Single jobs while the system is empty, each with probability `q`.
    #[cfg_attr(feature = "serde", serde(rename = "ii"))]
    II { q: f64 },
    /// II plus, after every Willie arrival, a batch `~Q` with probability `q`.
    #[cfg_attr(feature = "serde", serde(rename = "iia"))]
    IIA { q: f64, batch: BatchPMF },
    /// II-A with batch sizes `P(s) = a (1-a)^{s-1}`, `s >= 1`.
    #[cfg_attr(feature = "serde", serde(rename = "iia_geometric"))]
    IIAGeometric { q: f64, a: f64 },
}

impl Policy {
    /// Insertion probability, 0 for `NoInsertion`.
    pub fn q(&self) -> f64 {
        match *self {
            Policy::NoInsertion => 0.0,
            Policy::IEBP { q } | Policy::II { q } | Policy::IIA { q, .. } | Policy::IIAGeometric { q, .. } => q,
        }
    }

    /// Same policy family with `q` replaced.
    pub fn with_q(&self, q: f64) -> Policy {
        match self {
            Policy::NoInsertion => Policy::NoInsertion,
            Policy::IEBP { .. } => Policy::IEBP { q },
            Policy::II { .. } => Policy::II { q },
            Policy::IIA { batch, .. } => Policy::IIA { q, batch: batch.clone() },
            Policy::IIAGeometric { a, .. } => Policy::IIAGeometric { q, a: *a },
        }
    }

    /// Mean batch size after arrivals, if the policy inserts at arrivals.
    pub fn mean_batch(&self) -> Option<f64> {
        match self {
            Policy::IIA { batch, .. } => Some(batch.mean()),
            Policy::IIAGeometric { a, .. } => Some(1.0 / a),
            _ => None,
        }
    }

    /// Range checks plus the II-A stability condition `rho1 + q rho2 B < 1`.
    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let q = self.q();
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain("q must lie in [0, 1]"));
        }
        if let Policy::IIAGeometric { a, .. } = *self {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Domain("geometric parameter a must lie in (0, 1]"));
            }
        }
        if let Some(b) = self.mean_batch() {
            let load = params.rho1 + q * params.rho2 * b;
            if load >= 1.0 {
                return Err(Error::Stability(format!("rho1 + q rho2 B = {load} must be below 1")));
            }
        }
        Ok(())
    }
}

/// Willie's view of one busy period.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BusyPeriodObs {
    pub n_jobs: usize,
    pub arrivals: Vec<f64>,
    pub services: Vec<f64>,
    pub y: f64,
    pub v: f64,
}

/// Ground truth for one cycle (idle stretch plus the W-BP that follows).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleTruth {
    pub alice_inserted: u64,
    pub alice_served: u64,
    /// Alice jobs in system when the W-BP's first job arrived.
    pub alice_ahead: u64,
}

impl CycleTruth {
    /// Whether Alice work delayed the first Willie job.
    pub fn interfered(&self) -> bool {
        self.alice_ahead > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimRun {
    pub seed: u64,
    pub bps: Vec<BusyPeriodObs>,
    pub truth: Vec<CycleTruth>,
    pub alice_inserted: u64,
    pub alice_served: u64,
    pub willie_served: u64,
    pub wall_time_simulated: f64,
}

/// `S1 = D1 - A1`, `S_i = D_i - max(A_i, D_{i-1})`.
pub fn reconstruct_services(arrivals: &[f64], departures: &[f64]) -> Result<Vec<f64>> {
    if arrivals.len() != departures.len() {
        return Err(Error::MalformedTrace("arrival and departure counts differ"));
    }
    if arrivals.iter().chain(departures).any(|t| !t.is_finite()) {
        return Err(Error::MalformedTrace("times must be finite"));
    }
    if arrivals.windows(2).any(|w| w[1] <= w[0]) || departures.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::MalformedTrace("times must be strictly increasing"));
    }
    if arrivals.iter().zip(departures).any(|(a, d)| d <= a) {
        return Err(Error::MalformedTrace("every departure must follow its arrival"));
    }
    let mut prev = f64::NEG_INFINITY;
    Ok(arrivals
        .iter()
        .zip(departures)
        .map(|(&a, &d)| {
            let s = d - a.max(prev);
            prev = d;
            s
        })
        .collect())
}

/// One `(y, v)` pair per busy period.
pub fn extract_yv(run: &SimRun) -> Vec<(f64, f64)> {
    run.bps.iter().map(|bp| (bp.y, bp.v)).collect()
}

/// One uniformly chosen job per busy period.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomJobs {
    /// `(bp_index, job_index, reconstructed_service)`.
    pub picks: Vec<(usize, usize, f64)>,
    /// Fraction of picks that landed on the first job.
    pub pi_hat: f64,
}

pub fn pick_random_job(run: &SimRun, seed: u64) -> RandomJobs {
    let mut rng = stream(seed, &[0x7069_636b]);
    let picks: Vec<_> = run
        .bps
        .iter()
        .enumerate()
        .map(|(j, bp)| {
            let i = rng.random_range(0..bp.n_jobs);
            (j, i, bp.services[i])
        })
        .collect();
    let first = picks.iter().filter(|p| p.1 == 0).count();
    let pi_hat = if picks.is_empty() { 0.0 } else { first as f64 / picks.len() as f64 };
    RandomJobs { picks, pi_hat }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Departure,
    Arrival,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed so that the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.kind.cmp(&self.kind))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Willie { service: f64 },
    Alice { service: f64 },
}

impl Job {
    fn service(self) -> f64 {
        match self {
            Job::Willie { service } | Job::Alice { service } => service,
        }
    }
}

/// Streaming simulator; each call to [`Simulator::next_bp`] advances to the
/// end of the next W-BP.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SystemParams,
    policy: Policy,
    rng: StreamRng,
    guard: usize,
    events: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    queue: VecDeque<Job>,
    willie_in_system: usize,
    last_bp_end: f64,
    arrivals: Vec<f64>,
    departures: Vec<f64>,
    cycle: CycleTruth,
    alice_inserted: u64,
    alice_served: u64,
    willie_served: u64,
}

impl Simulator {
    pub fn new(params: &SystemParams, policy: &Policy, seed: u64) -> Result<Self> {
        policy.validate(params)?;
        let mut sim = Simulator {
            params: params.clone(),
            policy: policy.clone(),
            rng: stream(seed, &[]),
            guard: RUNAWAY_GUARD,
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            queue: VecDeque::new(),
            willie_in_system: 0,
            last_bp_end: 0.0,
            arrivals: Vec::new(),
            departures: Vec::new(),
            cycle: CycleTruth::default(),
            alice_inserted: 0,
            alice_served: 0,
            willie_served: 0,
        };
        let first = exp_draw(&mut sim.rng, sim.params.lambda);
        sim.schedule(first, EventKind::Arrival);
        sim.arrival_batch()?;
        sim.start_head();
        sim.end_of_bp()?;
        sim.on_empty()?;
        Ok(sim)
    }

    /// Replace the runaway threshold.
    pub fn with_guard(mut self, guard: usize) -> Self {
        self.guard = guard;
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn alice_inserted(&self) -> u64 {
        self.alice_inserted
    }

    pub fn alice_served(&self) -> u64 {
        self.alice_served
    }

    pub fn willie_served(&self) -> u64 {
        self.willie_served
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Event { time, kind, seq: self.seq });
    }

    fn flip(&mut self, q: f64) -> bool {
        q > 0.0 && self.rng.random::<f64>() < q
    }

    fn insert_alice(&mut self, count: usize) -> Result<()> {
        for _ in 0..count {
            let service = self.params.g2.sample(&mut self.rng);
            self.queue.push_back(Job::Alice { service });
        }
        self.alice_inserted += count as u64;
        self.cycle.alice_inserted += count as u64;
        if self.queue.len() > self.guard {
            return Err(Error::Runaway { in_system: self.queue.len() });
        }
        Ok(())
    }

    fn start_head(&mut self) {
        if let Some(job) = self.queue.front() {
            let t = self.now + job.service();
            self.schedule(t, EventKind::Departure);
        }
    }

    /// II-A batch after a Willie arrival (and the notional one at time 0).
    fn arrival_batch(&mut self) -> Result<()> {
        let q = match self.policy {
            Policy::IIA { q, .. } | Policy::IIAGeometric { q, .. } => q,
            _ => return Ok(()),
        };
        if !self.flip(q) {
            return Ok(());
        }
        let size = match &self.policy {
            Policy::IIA { batch, .. } => batch.draw(self.rng.random::<f64>()),
            &Policy::IIAGeometric { a, .. } => {
                let mut s = 1;
                while a < 1.0 && self.rng.random::<f64>() >= a {
                    s += 1;
                }
                s
            }
            _ => 0,
        };
        self.insert_alice(size)
    }

    /// IEBP rule; the system is necessarily empty under IEBP at this point.
    fn end_of_bp(&mut self) -> Result<()> {
        if let Policy::IEBP { q } = self.policy {
            if self.flip(q) {
                let was_idle = self.queue.is_empty();
                self.insert_alice(1)?;
                if was_idle {
                    self.start_head();
                }
            }
        }
        Ok(())
    }

    /// Idle rule of the II family: one flip each time the system empties.
    fn on_empty(&mut self) -> Result<()> {
        if !self.queue.is_empty() {
            return Ok(());
        }
        let q = match self.policy {
            Policy::II { q } | Policy::IIA { q, .. } | Policy::IIAGeometric { q, .. } => q,
            _ => return Ok(()),
        };
        if self.flip(q) {
            self.insert_alice(1)?;
            self.start_head();
        }
        Ok(())
    }

    /// Advance to the end of the next W-BP, filling `obs` and returning the
    /// cycle's ground truth.
    pub fn next_bp_into(&mut self, obs: &mut BusyPeriodObs) -> Result<CycleTruth> {
        loop {
            let ev = self.events.pop().ok_or(Error::Domain("event list exhausted"))?;
            self.now = ev.time;
            match ev.kind {
                EventKind::Arrival => {
                    let service = self.params.g1.sample(&mut self.rng);
                    let was_idle = self.queue.is_empty();
                    if self.willie_in_system == 0 {
                        self.cycle.alice_ahead = self.queue.len() as u64;
                    }
                    self.queue.push_back(Job::Willie { service });
                    self.willie_in_system += 1;
                    self.arrivals.push(self.now);
                    if was_idle {
                        self.start_head();
                    }
                    self.arrival_batch()?;
                    let next = self.now + exp_draw(&mut self.rng, self.params.lambda);
                    self.schedule(next, EventKind::Arrival);
                    if self.queue.len() > self.guard {
                        return Err(Error::Runaway { in_system: self.queue.len() });
                    }
                }
                EventKind::Departure => {
                    let job = self.queue.pop_front().ok_or(Error::Domain("departure from an empty queue"))?;
                    let mut finished = None;
                    match job {
                        Job::Alice { .. } => {
                            self.alice_served += 1;
                            self.cycle.alice_served += 1;
                        }
                        Job::Willie { .. } => {
                            self.willie_served += 1;
                            self.willie_in_system -= 1;
                            self.departures.push(self.now);
                            if self.willie_in_system == 0 {
                                finished = Some(self.finish_bp(obs)?);
                            }
                        }
                    }
                    self.start_head();
                    if finished.is_some() {
                        self.end_of_bp()?;
                    }
                    self.on_empty()?;
                    if let Some(truth) = finished {
                        return Ok(truth);
                    }
                }
            }
        }
    }

    fn finish_bp(&mut self, obs: &mut BusyPeriodObs) -> Result<CycleTruth> {
        obs.services = reconstruct_services(&self.arrivals, &self.departures)?;
        obs.n_jobs = self.arrivals.len();
        obs.v = self.arrivals[0] - self.last_bp_end;
        obs.y = obs.services[0];
        obs.arrivals.clear();
        obs.arrivals.extend_from_slice(&self.arrivals);
        self.arrivals.clear();
        self.departures.clear();
        self.last_bp_end = self.now;
        Ok(core::mem::take(&mut self.cycle))
    }

    pub fn next_bp(&mut self) -> Result<(BusyPeriodObs, CycleTruth)> {
        let mut obs = BusyPeriodObs::default();
        let truth = self.next_bp_into(&mut obs)?;
        Ok((obs, truth))
    }
}

/// Simulate `n_bps` complete W-BPs from an empty system.
pub fn run(params: &SystemParams, policy: &Policy, n_bps: usize, seed: u64) -> Result<SimRun> {
    if n_bps == 0 {
        return Err(Error::Domain("n_bps must be >= 1"));
    }
    let mut sim = Simulator::new(params, policy, seed)?;
    let mut bps = Vec::with_capacity(n_bps);
    let mut truth = Vec::with_capacity(n_bps);
    for _ in 0..n_bps {
        let (obs, t) = sim.next_bp()?;
        bps.push(obs);
        truth.push(t);
    }
    Ok(SimRun {
        seed,
        bps,
        truth,
        alice_inserted: sim.alice_inserted,
        alice_served: sim.alice_served,
        willie_served: sim.willie_served,
        wall_time_simulated: sim.now,
    })
}
