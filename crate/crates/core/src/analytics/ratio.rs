//! Per-sample likelihood ratios `f1 / f0` for each statistic.
//!
//! The ratios are exposed through their deviation `d = f1/f0 - 1`, which
//! keeps `log(1 + d)` and `sqrt(1 + d) - 1` accurate when the alternative is
//! close to the null.

use libm::exp;

use super::iia::IiaModel;
use super::kernel::{exp_conv_ratio, rho_unchecked, rho_y};
use super::{BatchPMF, Statistic, SystemParams};
use crate::dists::ServiceDist;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Kind {
    Yv,
    YOnly,
    IiYv { decay: f64, mu2: f64 },
    IiYOnly { coef: f64, mu2: f64 },
    Iia(IiaModel),
}

/// Likelihood ratio of one statistic at a fixed insertion probability.
#[derive(Debug, Clone)]
pub struct LikelihoodRatio {
    params: SystemParams,
    q: f64,
    statistic: Statistic,
    kind: Kind,
}

pub(crate) fn exponential_rate(d: &ServiceDist) -> Option<f64> {
    match d {
        ServiceDist::Exponential { rate } => Some(*rate),
        ServiceDist::Erlang { stages: 1, stage_rate } => Some(*stage_rate),
        ServiceDist::HyperExponential { branches } if branches.len() == 1 => Some(branches[0].1),
        _ => None,
    }
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::Domain("q must lie in [0, 1]"))
    }
}

impl LikelihoodRatio {
    /// Ratio for the IEBP and II statistics. The II-A statistic needs a
    /// batch law and `pi_J`; use [`LikelihoodRatio::iia`].
    pub fn new(params: &SystemParams, q: f64, statistic: Statistic) -> Result<Self> {
        check_q(q)?;
        let kind = match statistic {
            Statistic::YV => Kind::Yv,
            Statistic::YOnly => Kind::YOnly,
            Statistic::IIYV | Statistic::IIYOnly => {
                let mu2 = exponential_rate(&params.g2)
                    .ok_or(Error::Unsupported("insert-at-idle ratios need an exponential g2"))?;
                if statistic == Statistic::IIYV {
                    Kind::IiYv { decay: mu2 * (1.0 - q), mu2 }
                } else {
                    let (p, pbar) = (params.p, params.p_bar());
                    Kind::IiYOnly { coef: p * q / (1.0 - pbar * q), mu2 }
                }
            }
            Statistic::IIARandomJob => {
                return Err(Error::Unsupported("the random-job statistic needs a batch law and pi_J"))
            }
        };
        Ok(LikelihoodRatio { params: params.clone(), q, statistic, kind })
    }

    /// Ratio `W(q, x)` of the random-job detector under II-A.
    pub fn iia(params: &SystemParams, q: f64, batch: &BatchPMF, pi_j: f64) -> Result<Self> {
        let model = IiaModel::new(params, q, batch, pi_j)?;
        Ok(LikelihoodRatio { params: params.clone(), q, statistic: Statistic::IIARandomJob, kind: Kind::Iia(model) })
    }

    pub fn statistic(&self) -> Statistic {
        self.statistic
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// `f1/f0 - 1` at a `(y, v)` observation.
    pub fn deviation_yv(&self, y: f64, v: f64) -> Result<f64> {
        if !(y >= 0.0 && v >= 0.0) {
            return Err(Error::Domain("observations must be nonnegative"));
        }
        if self.q == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            Kind::Yv => Ok(self.q * rho_unchecked(&self.params, y, v)?),
            Kind::IiYv { decay, mu2 } => {
                Ok(self.q * exp(-decay * v) * (exp_conv_ratio(&self.params.g1, *mu2, y) - 1.0))
            }
            _ => Err(Error::ObservationMismatch),
        }
    }

    /// `f1/f0 - 1` at a single service observation.
    pub fn deviation_y(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(Error::Domain("observations must be nonnegative"));
        }
        if self.q == 0.0 {
            return Ok(0.0);
        }
        match &self.kind {
            Kind::YOnly => Ok(self.q * rho_y(&self.params, y)?),
            Kind::IiYOnly { coef, mu2 } => Ok(coef * (exp_conv_ratio(&self.params.g1, *mu2, y) - 1.0)),
            Kind::Iia(model) => model.deviation(y),
            _ => Err(Error::ObservationMismatch),
        }
    }

    pub fn ratio_yv(&self, y: f64, v: f64) -> Result<f64> {
        self.deviation_yv(y, v).map(|d| 1.0 + d)
    }

    pub fn ratio_y(&self, y: f64) -> Result<f64> {
        self.deviation_y(y).map(|d| 1.0 + d)
    }
}
