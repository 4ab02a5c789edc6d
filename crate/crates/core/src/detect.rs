//! Willie's likelihood-ratio tests and Monte Carlo error estimates.

use libm::{log, log1p, sqrt};
use rand::Rng;

use crate::analytics::{BatchPMF, LikelihoodRatio, Statistic, SystemParams};
use crate::error::{Error, Result};
use crate::rng::{child_seed, stream, StreamRng};
use crate::simqueue::{BusyPeriodObs, Policy, Simulator};

/// Per-sample ratios below this are clamped.
pub const RATIO_FLOOR: f64 = 1e-300;

/// Batch law and first-job probability assumed by the random-job detector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct IiaAssumption {
    pub batch: BatchPMF,
    pub pi_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DetectorSpec {
    pub statistic: Statistic,
    pub assumed_q: f64,
    pub iia: Option<IiaAssumption>,
}

impl DetectorSpec {
    pub fn new(statistic: Statistic, assumed_q: f64) -> Self {
        DetectorSpec { statistic, assumed_q, iia: None }
    }

    pub fn random_job(assumed_q: f64, batch: BatchPMF, pi_j: f64) -> Self {
        DetectorSpec { statistic: Statistic::IIARandomJob, assumed_q, iia: Some(IiaAssumption { batch, pi_j }) }
    }

    /// Same detector with `assumed_q` replaced.
    pub fn with_q(&self, q: f64) -> Self {
        DetectorSpec { assumed_q: q, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Hypothesis {
    H0,
    H1,
}

/// Observations in the shape each statistic expects.
#[derive(Debug, Clone, Copy)]
pub enum Observations<'a> {
    YV(&'a [(f64, f64)]),
    Y(&'a [f64]),
    RandomJob(&'a [f64]),
}

/// Summed log-likelihood ratio and the number of clamped samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Llr {
    pub value: f64,
    pub clamped: u64,
}

impl Llr {
    fn add(&mut self, deviation: f64) -> Result<()> {
        if deviation.is_nan() {
            return Err(Error::NonFiniteLlr);
        }
        if 1.0 + deviation > RATIO_FLOOR {
            self.value += log1p(deviation);
        } else {
            self.value += log(RATIO_FLOOR);
            self.clamped += 1;
        }
        Ok(())
    }
}

/// A detector built for fixed system parameters.
#[derive(Debug, Clone)]
pub struct Detector {
    ratio: LikelihoodRatio,
}

impl Detector {
    pub fn new(spec: &DetectorSpec, params: &SystemParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&spec.assumed_q) {
            return Err(Error::Domain("assumed_q must lie in [0, 1]"));
        }
        let ratio = match spec.statistic {
            Statistic::IIARandomJob => {
                let a = spec.iia.as_ref().ok_or(Error::InvalidParams(
                    "the random-job detector needs a batch law and pi_J".into(),
                ))?;
                LikelihoodRatio::iia(params, spec.assumed_q, &a.batch, a.pi_j)?
            }
            s => LikelihoodRatio::new(params, spec.assumed_q, s)?,
        };
        Ok(Detector { ratio })
    }

    pub fn statistic(&self) -> Statistic {
        self.ratio.statistic()
    }

    pub fn loglr(&self, obs: Observations<'_>) -> Result<Llr> {
        let mut llr = Llr::default();
        match (self.statistic(), obs) {
            (Statistic::YV | Statistic::IIYV, Observations::YV(pairs)) => {
                for &(y, v) in pairs {
                    llr.add(self.ratio.deviation_yv(y, v)?)?;
                }
            }
            (Statistic::YOnly | Statistic::IIYOnly, Observations::Y(ys))
            | (Statistic::IIARandomJob, Observations::RandomJob(ys)) => {
                for &y in ys {
                    llr.add(self.ratio.deviation_y(y)?)?;
                }
            }
            _ => return Err(Error::ObservationMismatch),
        }
        Ok(llr)
    }

    /// Fold one busy period into `llr`; the random-job statistic draws its
    /// job index from `rng`.
    pub fn observe<R: Rng + ?Sized>(&self, bp: &BusyPeriodObs, rng: &mut R, llr: &mut Llr) -> Result<()> {
        let d = match self.statistic() {
            Statistic::YV | Statistic::IIYV => self.ratio.deviation_yv(bp.y, bp.v)?,
            Statistic::YOnly | Statistic::IIYOnly => self.ratio.deviation_y(bp.y)?,
            Statistic::IIARandomJob => {
                let i = rng.random_range(0..bp.n_jobs);
                self.ratio.deviation_y(bp.services[i])?
            }
        };
        llr.add(d)
    }
}

pub fn loglr(spec: &DetectorSpec, params: &SystemParams, obs: Observations<'_>) -> Result<Llr> {
    Detector::new(spec, params)?.loglr(obs)
}

/// H1 iff `llr > 0`; a tie goes to H0.
pub fn decide(llr: f64) -> Result<Hypothesis> {
    if !llr.is_finite() {
        return Err(Error::NonFiniteLlr);
    }
    Ok(if llr > 0.0 { Hypothesis::H1 } else { Hypothesis::H0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PEEstimate {
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
    /// Trials per hypothesis.
    pub trials: u64,
    /// 95% normal-approximation half-width on `p_e`.
    pub ci_halfwidth: f64,
    /// Samples whose ratio hit [`RATIO_FLOOR`].
    pub clamped: u64,
}

impl PEEstimate {
    /// From the number of rejected H0 trials and accepted H1 trials.
    pub fn from_counts(false_alarms: u64, missed: u64, trials: u64, clamped: u64) -> Self {
        let m = trials as f64;
        let p_fa = false_alarms as f64 / m;
        let p_md = missed as f64 / m;
        let var = p_fa * (1.0 - p_fa) / m + p_md * (1.0 - p_md) / m;
        PEEstimate { p_fa, p_md, p_e: p_fa + p_md, trials, ci_halfwidth: 1.96 * sqrt(var), clamped }
    }
}

/// Result of one simulated observation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub truth: Hypothesis,
    pub decision: Hypothesis,
    pub llr: Llr,
}

fn trial_rngs(seed: u64, truth: Hypothesis, index: u64) -> (u64, StreamRng) {
    let h = truth as u64;
    (child_seed(seed, &[h, index]), stream(seed, &[h, index, 1]))
}

/// Simulate `n_bps` busy periods under `truth` (H0 runs without insertion)
/// and apply the detector. Seeds depend only on `(seed, truth, index)`.
pub fn run_trial(
    params: &SystemParams,
    policy: &Policy,
    detector: &Detector,
    n_bps: usize,
    seed: u64,
    truth: Hypothesis,
    index: u64,
) -> Result<TrialOutcome> {
    let (sim_seed, mut pick) = trial_rngs(seed, truth, index);
    let policy = match truth {
        Hypothesis::H0 => &Policy::NoInsertion,
        Hypothesis::H1 => policy,
    };
    let mut sim = Simulator::new(params, policy, sim_seed)?;
    let mut bp = BusyPeriodObs::default();
    let mut llr = Llr::default();
    for _ in 0..n_bps {
        sim.next_bp_into(&mut bp)?;
        detector.observe(&bp, &mut pick, &mut llr)?;
    }
    Ok(TrialOutcome { truth, decision: decide(llr.value)?, llr })
}

/// Tally outcomes into an estimate; order does not matter.
pub fn tally<'a>(outcomes: impl IntoIterator<Item = &'a TrialOutcome>, trials: u64) -> PEEstimate {
    let (mut fa, mut md, mut clamped) = (0, 0, 0);
    for o in outcomes {
        clamped += o.llr.clamped;
        match (o.truth, o.decision) {
            (Hypothesis::H0, Hypothesis::H1) => fa += 1,
            (Hypothesis::H1, Hypothesis::H0) => md += 1,
            _ => {}
        }
    }
    PEEstimate::from_counts(fa, md, trials, clamped)
}

pub fn check_pe_args(n_bps: usize, trials: u64) -> Result<()> {
    if n_bps == 0 {
        return Err(Error::Domain("n_bps must be >= 1"));
    }
    if trials < 100 {
        return Err(Error::Domain("trials must be >= 100"));
    }
    Ok(())
}

/// Sequential estimate of `P_FA`, `P_MD` and `P_E` over `trials` windows per
/// hypothesis.
pub fn estimate_pe(
    params: &SystemParams,
    policy: &Policy,
    spec: &DetectorSpec,
    n_bps: usize,
    trials: u64,
    seed: u64,
) -> Result<PEEstimate> {
    check_pe_args(n_bps, trials)?;
    policy.validate(params)?;
    let detector = Detector::new(spec, params)?;
    let mut outcomes = alloc::vec::Vec::with_capacity(2 * trials as usize);
    for truth in [Hypothesis::H0, Hypothesis::H1] {
        for i in 0..trials {
            outcomes.push(run_trial(params, policy, &detector, n_bps, seed, truth, i)?);
        }
    }
    Ok(tally(&outcomes, trials))
}

/// `pi_J` estimate `E[1/N]` under `policy`, i.e. the chance that a uniformly
/// chosen job is the first of its busy period.
pub fn calibrate_pi_j(params: &SystemParams, policy: &Policy, n_bps: usize, seed: u64) -> Result<f64> {
    if n_bps == 0 {
        return Err(Error::Domain("n_bps must be >= 1"));
    }
    let mut sim = Simulator::new(params, policy, seed)?;
    let mut bp = BusyPeriodObs::default();
    let mut acc = 0.0;
    for _ in 0..n_bps {
        sim.next_bp_into(&mut bp)?;
        acc += 1.0 / bp.n_jobs as f64;
    }
    Ok(acc / n_bps as f64)
}
