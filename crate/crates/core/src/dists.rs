//! Service-time laws: exponential, hyper-exponential and Erlang.
//!
//! Every law has a closed-form density, distribution function and
//! Laplace-Stieltjes transform. Densities return `0.0` where the law has no
//! mass (Erlang with `k >= 2` at the origin); only negative arguments are
//! rejected.

use alloc::format;
use alloc::vec::Vec;
use libm::{exp, lgamma, log, pow};
use rand::Rng;

use crate::error::{Error, Result};
use crate::special::gamma_q_int;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum ServiceDist {
    Exponential { rate: f64 },
    /// `(weight, rate)` pairs.
    HyperExponential { branches: Vec<(f64, f64)> },
    Erlang { stages: u32, stage_rate: f64 },
}

const WEIGHT_TOL: f64 = 1e-12;

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("rate must be finite and > 0, got {rate}")))
    }
}

impl ServiceDist {
    pub fn exponential(rate: f64) -> Result<Self> {
        let d = ServiceDist::Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn hyper_exponential(branches: Vec<(f64, f64)>) -> Result<Self> {
        let d = ServiceDist::HyperExponential { branches };
        d.validate()?;
        Ok(d)
    }

    pub fn erlang(stages: u32, stage_rate: f64) -> Result<Self> {
        let d = ServiceDist::Erlang { stages, stage_rate };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ServiceDist::Exponential { rate } => check_rate(*rate),
            ServiceDist::HyperExponential { branches } => {
                if branches.is_empty() {
                    return Err(Error::InvalidParams("hyper-exponential needs a branch".into()));
                }
                let mut total = 0.0;
                for &(w, rate) in branches {
                    check_rate(rate)?;
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::InvalidParams(format!("negative branch weight {w}")));
                    }
                    total += w;
                }
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::InvalidParams(format!("branch weights sum to {total}")));
                }
                Ok(())
            }
            ServiceDist::Erlang { stages, stage_rate } => {
                if *stages == 0 {
                    return Err(Error::InvalidParams("Erlang needs at least one stage".into()));
                }
                check_rate(*stage_rate)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => 1.0 / rate,
            ServiceDist::HyperExponential { branches } => {
                branches.iter().map(|&(w, r)| w / r).sum()
            }
            ServiceDist::Erlang { stages, stage_rate } => *stages as f64 / stage_rate,
        }
    }

    /// Reciprocal mean.
    pub fn mean_rate(&self) -> f64 {
        1.0 / self.mean()
    }

    pub fn min_rate(&self) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => *rate,
            ServiceDist::HyperExponential { branches } => {
                branches.iter().map(|b| b.1).fold(f64::INFINITY, f64::min)
            }
            ServiceDist::Erlang { stage_rate, .. } => *stage_rate,
        }
    }

    pub fn max_rate(&self) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => *rate,
            ServiceDist::HyperExponential { branches } => branches.iter().map(|b| b.1).fold(0.0, f64::max),
            ServiceDist::Erlang { stage_rate, .. } => *stage_rate,
        }
    }

    /// Density; negative `x` is a domain error.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain("pdf needs x >= 0"));
        }
        Ok(self.density(x))
    }

    /// Density without the domain check (0 for negative `x`).
    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            ServiceDist::Exponential { rate } => rate * exp(-rate * x),
            ServiceDist::HyperExponential { branches } => {
                branches.iter().map(|&(w, r)| w * r * exp(-r * x)).sum()
            }
            ServiceDist::Erlang { stages, stage_rate } => {
                let k = *stages as f64;
                if *stages == 1 {
                    stage_rate * exp(-stage_rate * x)
                } else if x == 0.0 {
                    0.0
                } else {
                    exp(k * log(*stage_rate) + (k - 1.0) * log(x) - stage_rate * x - lgamma(k))
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain("cdf needs x >= 0"));
        }
        Ok(1.0 - self.tail(x))
    }

    /// Complementary distribution function `1 - G(x)`, computed without
    /// cancellation.
    pub fn survival(&self, x: f64) -> Result<f64> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain("survival needs x >= 0"));
        }
        Ok(self.tail(x))
    }

    pub(crate) fn tail(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            ServiceDist::Exponential { rate } => exp(-rate * x),
            ServiceDist::HyperExponential { branches } => {
                branches.iter().map(|&(w, r)| w * exp(-r * x)).sum()
            }
            ServiceDist::Erlang { stages, stage_rate } => gamma_q_int(*stages, stage_rate * x),
        }
    }

    /// Laplace-Stieltjes transform `E[e^{-sX}]`.
    pub fn lst(&self, s: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::Domain("lst needs s >= 0"));
        }
        Ok(match self {
            ServiceDist::Exponential { rate } => rate / (rate + s),
            ServiceDist::HyperExponential { branches } => {
                branches.iter().map(|&(w, r)| w * r / (r + s)).sum()
            }
            ServiceDist::Erlang { stages, stage_rate } => {
                pow(stage_rate / (stage_rate + s), *stages as f64)
            }
        })
    }

    /// `g(x - t) / g(x)` for `0 <= t <= x`, `x > 0`.
    ///
    /// Finite at every `x > 0` even where `g(x)` underflows, which keeps
    /// convolution ratios such as `(g * h)(x) / g(x)` well behaved.
    pub fn pdf_ratio(&self, x: f64, t: f64) -> f64 {
        exp(self.log_pdf_ratio(x, t))
    }

    /// `ln(g(x - t) / g(x))`; `-inf` where `g(x - t) = 0`.
    pub fn log_pdf_ratio(&self, x: f64, t: f64) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => rate * t,
            ServiceDist::HyperExponential { branches } => {
                let lo = self.min_rate();
                let mut num = f64::NEG_INFINITY;
                let mut den = 0.0;
                for &(w, r) in branches {
                    if w == 0.0 {
                        continue;
                    }
                    let lb = log(w * r) - (r - lo) * x;
                    den += exp(lb);
                    let ln = lb + r * t;
                    num = if num >= ln { num + libm::log1p(exp(ln - num)) } else { ln + libm::log1p(exp(num - ln)) };
                }
                num - log(den)
            }
            ServiceDist::Erlang { stages, stage_rate } => {
                let u = 1.0 - t / x;
                if *stages == 1 {
                    stage_rate * t
                } else if u <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (*stages as f64 - 1.0) * log(u) + stage_rate * t
                }
            }
        }
    }

    /// Draw one variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ServiceDist::Exponential { rate } => exp_draw(rng, *rate),
            ServiceDist::HyperExponential { branches } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut rate = branches[branches.len() - 1].1;
                for &(w, r) in branches {
                    acc += w;
                    if u < acc {
                        rate = r;
                        break;
                    }
                }
                exp_draw(rng, rate)
            }
            ServiceDist::Erlang { stages, stage_rate } => {
                (0..*stages).map(|_| exp_draw(rng, *stage_rate)).sum()
            }
        }
    }
}

/// Exponential draw by inversion; `1 - U` lies in `(0, 1]`.
#[inline]
pub fn exp_draw<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -log(1.0 - u) / rate
}
