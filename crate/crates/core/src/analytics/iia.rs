//! Insert-at-idle-and-at-arrivals (II-A): random-job likelihood ratio
//! `W(q, x)`, its `q^2` coefficient and per-cycle job counts.
//!
//! Interfering Alice work ahead of a Willie job is an `s`-stage Erlang with
//! stage rate `mu2`, so `g2` must be exponential throughout.

use alloc::format;
use alloc::vec::Vec;
use libm::sqrt;

use super::hellinger::{growth_break, probe_cutoffs, sqrt_gap_sq, weighted_product, DetectabilityReport, Fallible, C0};
use super::kernel::erlang_conv_ratio;
use super::ratio::{check_q, exponential_rate};
use super::{BatchPMF, SystemParams};
use crate::dists::ServiceDist;
use crate::error::{Error, Result};
use crate::quad::Quad;

/// `constant + sum_s k_s (g1 * h_s)(x) / g1(x)`.
#[derive(Debug, Clone)]
struct ErlangMix {
    constant: f64,
    terms: Vec<(u32, f64)>,
}

impl ErlangMix {
    fn eval(&self, g1: &ServiceDist, mu2: f64, x: f64) -> Result<f64> {
        let mut acc = self.constant;
        for &(s, k) in &self.terms {
            acc += k * erlang_conv_ratio(g1, s, mu2, x)?;
        }
        Ok(acc)
    }
}

fn alice_rate(params: &SystemParams) -> Result<f64> {
    exponential_rate(&params.g2).ok_or(Error::Unsupported("II-A analysis needs an exponential g2"))
}

/// `q0 = (1 - rho1) / (rho2 B)`; infinite for `B = 0`.
fn stability_limit(params: &SystemParams, batch: &BatchPMF) -> f64 {
    if batch.mean() == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - params.rho1) / (params.rho2 * batch.mean())
    }
}

fn check_stable(params: &SystemParams, q: f64, batch: &BatchPMF) -> Result<f64> {
    check_q(q)?;
    let q0 = stability_limit(params, batch);
    if q >= q0 {
        return Err(Error::Stability(format!("q = {q} must be below q0 = {q0}")));
    }
    Ok(q0)
}

/// `sum_{l >= s} Q(l) pbar^{l-s}`.
fn tail(batch: &BatchPMF, pbar: f64, s: usize) -> f64 {
    batch.probs()[s.min(batch.probs().len())..].iter().rev().fold(0.0, |acc, &q| acc * pbar + q)
}

/// First-order coefficients `c_s` of `Phi_2`.
fn phi2_coeffs(batch: &BatchPMF, p: f64, pi_j: f64) -> Vec<f64> {
    let pbar = 1.0 - p;
    (1..=batch.max_size().max(1))
        .map(|s| {
            let from_first = if s >= 2 { p * pi_j * tail(batch, pbar, s) } else { 0.0 };
            from_first + (1.0 - pi_j) * batch.q(s)
        })
        .collect()
}

/// `W(q, x) = Delta1(q) + Delta2(q) Phi1(x) + q Phi2(x)` at fixed `(q, Q, pi_J)`.
#[derive(Debug, Clone)]
pub struct IiaModel {
    g1: ServiceDist,
    mu2: f64,
    q: f64,
    pi_j: f64,
    delta1: f64,
    delta2: f64,
    dev: ErlangMix,
}

impl IiaModel {
    pub fn new(params: &SystemParams, q: f64, batch: &BatchPMF, pi_j: f64) -> Result<Self> {
        let mu2 = alice_rate(params)?;
        check_stable(params, q, batch)?;
        if !(0.0..=1.0).contains(&pi_j) {
            return Err(Error::Domain("pi_J must lie in [0, 1]"));
        }
        let (p, pbar) = (params.p, params.p_bar());
        let g = batch.gen_fn(pbar);
        let (q_zero, g_bar) = (batch.q(0), 1.0 - g);
        let q_pos = 1.0 - q_zero;
        let pi_bar = 1.0 - pi_j;
        let den = 1.0 - q * pbar;
        let delta1_m1 = pi_j * q * (q * g_bar - p - g_bar) / den - pi_bar * q * q_pos;
        let delta2 = q * (pbar * (1.0 - q * q_pos) + g - q_zero) / (pbar * den);
        let c = phi2_coeffs(batch, p, pi_j);
        let mut terms = Vec::with_capacity(c.len());
        for (i, &cs) in c.iter().enumerate() {
            let s = i as u32 + 1;
            let k = if s == 1 { delta2 * p * pi_j + q * cs } else { q * cs };
            if k != 0.0 {
                terms.push((s, k));
            }
        }
        Ok(IiaModel {
            g1: params.g1.clone(),
            mu2,
            q,
            pi_j,
            delta1: 1.0 + delta1_m1,
            delta2,
            dev: ErlangMix { constant: delta1_m1, terms },
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn pi_j(&self) -> f64 {
        self.pi_j
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    /// `W(q, x) - 1`.
    pub fn deviation(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain("observations must be nonnegative"));
        }
        if self.q == 0.0 {
            return Ok(0.0);
        }
        self.dev.eval(&self.g1, self.mu2, x)
    }

    pub fn w(&self, x: f64) -> Result<f64> {
        self.deviation(x).map(|d| 1.0 + d)
    }
}

/// `W(q, x)`, the density ratio of the random job's reconstructed service.
pub fn iia_w(params: &SystemParams, q: f64, batch: &BatchPMF, pi_j: f64, x: f64) -> Result<f64> {
    IiaModel::new(params, q, batch, pi_j)?.w(x)
}

fn iia_quad() -> Quad {
    Quad::default().with_rel_tol(1e-13).with_abs_tol(1e-300)
}

/// `F(q) = E[sqrt(W(q, X))]` by direct quadrature.
pub fn iia_f(params: &SystemParams, q: f64, batch: &BatchPMF, pi_j: f64) -> Result<f64> {
    let m = IiaModel::new(params, q, batch, pi_j)?;
    let breaks: Vec<f64> = growth_break(params, q).into_iter().collect();
    let f = Fallible::new();
    let r = iia_quad().integrate_semi_inf_with_breaks(
        f.wrap(|x| {
            let w = params.g1.density(x);
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * sqrt(m.w(x)?.max(0.0)))
        }),
        0.0,
        params.x_scale(),
        &breaks,
    );
    f.finish(r)
}

/// Hellinger report for `n` random-job samples, via `1 - F(q) = E[(sqrt(W) - 1)^2] / 2`.
pub fn iia_detectability(
    params: &SystemParams,
    q: f64,
    batch: &BatchPMF,
    pi_j: f64,
    n: u64,
) -> Result<DetectabilityReport> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1"));
    }
    let m = IiaModel::new(params, q, batch, pi_j)?;
    let breaks: Vec<f64> = growth_break(params, q).into_iter().collect();
    let f = Fallible::new();
    let r = Quad::default().with_rel_tol(1e-10).with_abs_tol(1e-300).integrate_semi_inf_with_breaks(
        f.wrap(|x| {
            let w = params.g1.density(x);
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * sqrt_gap_sq(m.deviation(x)?))
        }),
        0.0,
        params.x_scale(),
        &breaks,
    );
    Ok(DetectabilityReport::from_deficit(0.5 * f.finish(r)?, n))
}

/// `c0` in `F(q) = 1 + c0 q^2 + o(q^2)`: `-1/8 E[(alpha + beta Phi1 + Phi2)^2]`.
pub fn iia_c0(params: &SystemParams, batch: &BatchPMF, pi_j: f64) -> Result<C0> {
    let mu2 = alice_rate(params)?;
    if !(0.0..=1.0).contains(&pi_j) {
        return Err(Error::Domain("pi_J must lie in [0, 1]"));
    }
    let (p, pbar) = (params.p, params.p_bar());
    let g = batch.gen_fn(pbar);
    let q_zero = batch.q(0);
    let alpha = -(p + 1.0 - g) * pi_j - (1.0 - q_zero) * (1.0 - pi_j);
    let beta = 1.0 + (g - q_zero) / pbar;
    let c = phi2_coeffs(batch, p, pi_j);
    let mut terms = Vec::with_capacity(c.len());
    for (i, &cs) in c.iter().enumerate() {
        let s = i as u32 + 1;
        let k = if s == 1 { beta * p * pi_j + cs } else { cs };
        if k != 0.0 {
            terms.push((s, k));
        }
    }
    let slope = ErlangMix { constant: alpha, terms };
    let g1 = &params.g1;
    let integrand = |x: f64| -> Result<f64> {
        let w = g1.density(x);
        if w == 0.0 {
            return Ok(0.0);
        }
        let d = slope.eval(g1, mu2, x)?;
        Ok(weighted_product(w, d, d))
    };
    if super::c0_finite(params)? {
        let f = Fallible::new();
        let r = Quad::default().integrate_semi_inf(f.wrap(integrand), 0.0, params.x_scale());
        if let Ok(v) = f.finish(r) {
            if v.is_finite() {
                return Ok(C0::Finite { value: -0.125 * v });
            }
        }
    }
    let cutoffs = probe_cutoffs(params);
    let truncated = Quad::default().truncated(|x| integrand(x).unwrap_or(f64::INFINITY), 0.0, &cutoffs);
    Ok(C0::Divergent { cutoffs, truncated })
}

/// Expected Willie and Alice jobs served per cycle (idle period plus W-BP).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleCounts {
    /// `E[N_W]`, closed form as stated in the cycle-count lemma.
    pub e_nw: f64,
    /// `E[N_A]`, closed form as stated in the cycle-count lemma.
    pub e_na: f64,
    pub q0: f64,
    /// `E[N_W]` from `(1 + lambda (sigma - tau)) / (1 - lambda tau)` with the
    /// interference law summed directly.
    pub e_nw_direct: f64,
    /// `E[N_A]` with the leftover batch weighted by `q Q(k)`.
    pub e_na_direct: f64,
}

pub fn iia_cycle_counts(params: &SystemParams, q: f64, batch: &BatchPMF) -> Result<CycleCounts> {
    alice_rate(params)?;
    let q0 = check_stable(params, q, batch)?;
    let (p, pbar) = (params.p, params.p_bar());
    let (rho1, rho2) = (params.rho1, params.rho2);
    let b = batch.mean();
    let g = batch.gen_fn(pbar);
    let (q_zero, q_one) = (batch.q(0), batch.q(1));
    let qbar = 1.0 - q;
    let den = 1.0 - q * pbar;
    let load = 1.0 - rho1 - q * rho2 * b;

    let bracket = 1.0
        + q * rho2 * p / den * (1.0 / den - (1.0 + p) * q_one / pbar)
        + q * q * rho2 / den * (p * b - p / (1.0 - q * p) * (1.0 - g));
    let e_nw = bracket / load;
    let e_na = q * b * e_nw + q * (pbar * qbar + p) / (den * den) * (qbar * (1.0 - q_zero) + g);

    // interference count ahead of the first job of a W-BP
    let e1 = q * p / den * (1.0 - q * (1.0 - q_zero) + (g - q_zero) / pbar);
    let mut mean_interf = e1;
    for s in 2..=batch.max_size() {
        mean_interf += s as f64 * q * p * tail(batch, pbar, s);
    }
    let e_nw_direct = (1.0 + rho2 * (mean_interf - q * b)) / load;
    let e_na_direct = q * b * e_nw_direct + q / den * (qbar + q * g);
    Ok(CycleCounts { e_nw, e_na, q0, e_nw_direct, e_na_direct })
}

/// Both sides of `sum_{s>=2} sum_{l>=s} Q(l) pbar^{l-s} = (1 - pbar G)/p - (G (1 + pbar) - Q(0))/pbar`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DoubleSum {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn double_sum_identity(batch: &BatchPMF, p: f64) -> Result<DoubleSum> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("p must lie in (0, 1)"));
    }
    let pbar = 1.0 - p;
    let probs = batch.probs();
    let mut lhs = 0.0;
    for s in 2..probs.len() {
        for (l, &ql) in probs.iter().enumerate().skip(s) {
            lhs += ql * libm::pow(pbar, (l - s) as f64);
        }
    }
    let g = batch.gen_fn(pbar);
    let rhs = (1.0 - pbar * g) / p - (g * (1.0 + pbar) - batch.q(0)) / pbar;
    Ok(DoubleSum { lhs, rhs })
}

/// Parameters for geometric batches of mean `1/a`: the batch's total work is
/// exponential with rate `a mu2`, which replaces `g2`.
pub fn iia_geometric_params(params: &SystemParams, a: f64) -> Result<SystemParams> {
    let mu2 = alice_rate(params)?;
    if !(a > 0.0 && a <= 1.0) {
        return Err(Error::Domain("geometric parameter a must lie in (0, 1]"));
    }
    SystemParams::new(params.lambda, params.g1.clone(), ServiceDist::exponential(a * mu2)?)
}
