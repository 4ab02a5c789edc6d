//! Closed-form detectability quantities, evaluated by quadrature.
//!
//! Everything here is pure. Functions take a [`SystemParams`] (arrival rate
//! plus the two service laws) and return plain numbers or small report
//! structs.

use alloc::format;
use alloc::vec::Vec;
use libm::{expm1, log1p};

use crate::dists::ServiceDist;
use crate::error::{Error, Result};

mod expansion;
mod hellinger;
mod iebp;
mod ii;
mod iia;
mod kernel;
mod ratio;

pub use expansion::{
    expansion, i_beta, mean_sqrt_xi, mean_sqrt_xi_integral_form, theta2_coefficient, xi_deficit, xi_fn,
    ExpansionTerms,
};
pub use hellinger::{c0, c0_finite, detectability, expected_rho, mean_sqrt_z, C0, DetectabilityReport};
pub use iebp::{t_w, TwReport};
pub use ii::{ii_quantities, IiQuantities};
pub use iia::{
    double_sum_identity, iia_c0, iia_cycle_counts, iia_detectability, iia_f, iia_geometric_params, iia_w, CycleCounts, DoubleSum,
    IiaModel,
};
pub use kernel::{g2_hat, g2_hat_first_moment, rho};
pub use ratio::LikelihoodRatio;

/// Ratios with `|r - 1|` below this snap to `r = 1`.
pub const R_SNAP: f64 = 1e-9;

/// Arrival rate and the two service laws, with derived constants.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SystemParams {
    pub lambda: f64,
    pub g1: ServiceDist,
    pub g2: ServiceDist,
    pub mu1: f64,
    pub mu2: f64,
    /// `mu1 / mu2`, snapped to 1 when within [`R_SNAP`].
    pub r: f64,
    /// `r / (r - 1)`; `None` at `r = 1`.
    pub beta: Option<f64>,
    /// Interference probability `1 - lst(g2, lambda)`.
    pub p: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl SystemParams {
    pub fn new(lambda: f64, g1: ServiceDist, g2: ServiceDist) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")));
        }
        g1.validate()?;
        g2.validate()?;
        let mu1 = g1.mean_rate();
        let mu2 = g2.mean_rate();
        let rho1 = lambda / mu1;
        if rho1 >= 1.0 {
            return Err(Error::Stability(format!("lambda/mu1 = {rho1} must be < 1")));
        }
        let mut r = mu1 / mu2;
        if (r - 1.0).abs() < R_SNAP {
            r = 1.0;
        }
        let beta = if r == 1.0 { None } else { Some(r / (r - 1.0)) };
        let p = interference_probability(&g2, lambda);
        Ok(SystemParams { lambda, g1, g2, mu1, mu2, r, beta, p, rho1, rho2: lambda / mu2 })
    }

    /// Exponential Willie and Alice laws.
    pub fn exp_exp(lambda: f64, mu1: f64, mu2: f64) -> Result<Self> {
        SystemParams::new(lambda, ServiceDist::exponential(mu1)?, ServiceDist::exponential(mu2)?)
    }

    pub fn p_bar(&self) -> f64 {
        1.0 - self.p
    }

    /// Slowest decay rate among the arrival process and both laws; its
    /// reciprocal is the natural length scale for tail integrals.
    pub fn min_rate(&self) -> f64 {
        self.lambda.min(self.g1.min_rate()).min(self.g2.min_rate())
    }

    pub(crate) fn x_scale(&self) -> f64 {
        1.0 / self.g1.min_rate().min(self.g2.min_rate())
    }
}

fn interference_probability(g2: &ServiceDist, lambda: f64) -> f64 {
    match g2 {
        ServiceDist::Exponential { rate } => lambda / (rate + lambda),
        ServiceDist::HyperExponential { branches } => {
            branches.iter().map(|&(w, r)| w * lambda / (r + lambda)).sum()
        }
        ServiceDist::Erlang { stages, stage_rate } => {
            -expm1(-(*stages as f64) * log1p(lambda / stage_rate))
        }
    }
}

/// Batch-size law `Q(s)`, `s = 0..S`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BatchPMF {
    probs: Vec<f64>,
    mean: f64,
}

impl BatchPMF {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParams("batch pmf is empty".into()));
        }
        if probs.iter().any(|&q| !(q.is_finite() && q >= 0.0)) {
            return Err(Error::InvalidParams("batch probabilities must be >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!("batch probabilities sum to {total}")));
        }
        let mean = probs.iter().enumerate().map(|(s, q)| s as f64 * q).sum();
        Ok(BatchPMF { probs, mean })
    }

    /// Point mass at `s`.
    pub fn point(s: usize) -> Self {
        let mut probs = alloc::vec![0.0; s + 1];
        probs[s] = 1.0;
        BatchPMF { probs, mean: s as f64 }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `Q(s)`, zero beyond the support.
    pub fn q(&self, s: usize) -> f64 {
        self.probs.get(s).copied().unwrap_or(0.0)
    }

    /// Largest index in the support.
    pub fn max_size(&self) -> usize {
        self.probs.len() - 1
    }

    /// Mean batch size `B`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Generating function `G_Q(z) = sum_s Q(s) z^s`.
    pub fn gen_fn(&self, z: f64) -> f64 {
        self.probs.iter().rev().fold(0.0, |acc, &q| acc * z + q)
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    pub fn draw(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (s, &q) in self.probs.iter().enumerate() {
            acc += q;
            if u < acc {
                return s;
            }
        }
        self.max_size()
    }
}

/// Likelihood statistics available to Willie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Statistic {
    /// First reconstructed service and preceding idle time, IEBP alternative.
    YV,
    /// First reconstructed service only, IEBP alternative.
    YOnly,
    /// `(Y, V)` against the insert-at-idle alternative.
    IIYV,
    /// `Y` only against the insert-at-idle alternative.
    IIYOnly,
    /// One uniformly chosen job per busy period, II-A alternative.
    IIARandomJob,
}

impl Statistic {
    /// Whether the statistic consumes `(y, v)` pairs.
    pub fn uses_idle_time(self) -> bool {
        matches!(self, Statistic::YV | Statistic::IIYV)
    }
}
