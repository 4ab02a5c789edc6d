//! Convolution ratios `(g1 * h)(x) / g1(x)` and the interference kernel.

use alloc::vec::Vec;
use libm::{exp, expm1, lgamma, log};

use super::SystemParams;
use crate::dists::ServiceDist;
use crate::error::{Error, Result};
use crate::quad::Quad;
use crate::special::{erlang_exp_conv_ratio, gamma_p_int};

fn conv_quad() -> Quad {
    Quad::default().with_rel_tol(1e-11).with_abs_tol(1e-300)
}

/// `int_0^1 s^{k-1} e^{y (1 - s)} ds`.
fn erlang_shift_integral(k: u32, y: f64) -> f64 {
    let kf = k as f64;
    if y == 0.0 {
        return 1.0 / kf;
    }
    if y > 0.0 {
        return exp(y + lgamma(kf) - kf * log(y)) * gamma_p_int(k, y);
    }
    // e^{-a} sum_j a^j / (j! (k + j)), terms built in log space.
    let a = -y;
    let la = log(a);
    let mut lt = -a;
    let mut sum = exp(lt) / kf;
    let mut j = 1.0;
    loop {
        lt += la - log(j);
        let add = exp(lt) / (kf + j);
        sum += add;
        if (j > a && add < 1e-17 * sum) || j > 1e6 {
            break;
        }
        j += 1.0;
    }
    sum
}

/// `R_mu(x) = (g1 * e_mu)(x) / g1(x)` with `e_mu` the exponential density of
/// rate `mu`. Zero at `x = 0`.
pub(crate) fn exp_conv_ratio(g1: &ServiceDist, mu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let branch = |a: f64| {
        let c = a - mu;
        if c == 0.0 {
            mu * x
        } else {
            mu * expm1(c * x) / c
        }
    };
    match g1 {
        ServiceDist::Exponential { rate } => branch(*rate),
        ServiceDist::HyperExponential { branches } => {
            let lo = g1.min_rate();
            let mut num = 0.0;
            let mut den = 0.0;
            for &(w, a) in branches {
                let base = w * a * exp(-(a - lo) * x);
                den += base;
                if base > 0.0 {
                    num += base * branch(a);
                }
            }
            num / den
        }
        ServiceDist::Erlang { stages, stage_rate } => {
            mu * x * erlang_shift_integral(*stages, (stage_rate - mu) * x)
        }
    }
}

/// `(g1 * h)(x) / g1(x)` for an arbitrary density `h`, by quadrature.
pub(crate) fn conv_ratio_quad<H: Fn(f64) -> f64>(g1: &ServiceDist, h: H, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let f = |t: f64| {
        let ht = h(t);
        if ht <= 0.0 {
            return 0.0;
        }
        let lr = g1.log_pdf_ratio(x, t);
        if lr < 700.0 {
            exp(lr) * ht
        } else {
            exp(lr + log(ht))
        }
    };
    conv_quad().integrate(f, 0.0, x).map(|i| i.value)
}

/// `(g1 * h_s)(x) / g1(x)` with `h_s` the `s`-stage Erlang density of stage
/// rate `mu`.
pub(crate) fn erlang_conv_ratio(g1: &ServiceDist, s: u32, mu: f64, x: f64) -> Result<f64> {
    match g1 {
        ServiceDist::Exponential { rate } => Ok(erlang_exp_conv_ratio(s, mu, rate - mu, x)),
        _ if s == 1 => Ok(exp_conv_ratio(g1, mu, x)),
        _ => {
            let h = ServiceDist::Erlang { stages: s, stage_rate: mu };
            conv_ratio_quad(g1, |t| h.density(t), x)
        }
    }
}

/// Exponential-mixture form `sum w_l mu_l e^{-mu_l t}` of `g2`, if any.
pub(crate) fn exp_mixture(g2: &ServiceDist) -> Option<Vec<(f64, f64)>> {
    match g2 {
        ServiceDist::Exponential { rate } => Some(alloc::vec![(1.0, *rate)]),
        ServiceDist::HyperExponential { branches } => Some(branches.clone()),
        ServiceDist::Erlang { stages: 1, stage_rate } => Some(alloc::vec![(1.0, *stage_rate)]),
        ServiceDist::Erlang { .. } => None,
    }
}

/// Interference kernel `rho(x, v)`, so that `Z(q, x, v) = 1 + q rho(x, v)`.
///
/// At `x = 0` with an Erlang Willie law the convolution ratio tends to 0,
/// so `rho(0, v) = -(1 - G2(v))`.
pub fn rho(params: &SystemParams, x: f64, v: f64) -> Result<f64> {
    if !(x >= 0.0 && v >= 0.0) {
        return Err(Error::Domain("rho needs x >= 0 and v >= 0"));
    }
    rho_unchecked(params, x, v)
}

pub(crate) fn rho_unchecked(params: &SystemParams, x: f64, v: f64) -> Result<f64> {
    let g1 = &params.g1;
    match exp_mixture(&params.g2) {
        Some(mix) => Ok(mix.iter().map(|&(w, m)| w * exp(-m * v) * (exp_conv_ratio(g1, m, x) - 1.0)).sum()),
        None => {
            let g2 = &params.g2;
            let conv = conv_ratio_quad(g1, |t| g2.density(v + t), x)?;
            Ok(conv - g2.tail(v))
        }
    }
}

/// `g2_hat(t) = int_0^inf lambda e^{-lambda v} g2(v + t) dv`.
pub fn g2_hat(params: &SystemParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain("g2_hat needs t >= 0"));
    }
    Ok(g2_hat_unchecked(params, t))
}

pub(crate) fn g2_hat_unchecked(params: &SystemParams, t: f64) -> f64 {
    let lam = params.lambda;
    match exp_mixture(&params.g2) {
        Some(mix) => mix.iter().map(|&(w, m)| w * lam * m / (lam + m) * exp(-m * t)).sum(),
        None => {
            let g2 = &params.g2;
            Quad::default()
                .with_abs_tol(1e-300)
                .integrate_semi_inf(|v| lam * exp(-lam * v) * g2.density(v + t), 0.0, 1.0 / lam.min(g2.min_rate()))
                .map(|i| i.value)
                .unwrap_or(f64::NAN)
        }
    }
}

/// `int_0^inf t g2_hat(t) dt`, by quadrature.
pub fn g2_hat_first_moment(params: &SystemParams) -> Result<f64> {
    let scale = 1.0 / params.g2.min_rate();
    Quad::default()
        .integrate_semi_inf(|t| t * g2_hat_unchecked(params, t), 0.0, scale)
        .map(|i| i.value)
}

/// Y-only kernel `rho_tilde(x) = (g1 * g2_hat)(x) / g1(x) - p`.
pub(crate) fn rho_y(params: &SystemParams, x: f64) -> Result<f64> {
    let g1 = &params.g1;
    let lam = params.lambda;
    match exp_mixture(&params.g2) {
        Some(mix) => Ok(mix
            .iter()
            .map(|&(w, m)| w * lam / (lam + m) * (exp_conv_ratio(g1, m, x) - 1.0))
            .sum()),
        None => Ok(conv_ratio_quad(g1, |t| g2_hat_unchecked(params, t), x)? - params.p),
    }
}
