//! Per-sample Hellinger affinity `E[sqrt(Z)]`, the n-sample sandwich and the
//! second moment `C0 = E[rho^2]`.

use alloc::vec::Vec;
use core::cell::RefCell;
use libm::{exp, expm1, log, log1p, sqrt};

use super::kernel::{exp_conv_ratio, exp_mixture, rho_unchecked};
use super::ratio::{check_q, LikelihoodRatio};
use super::{Statistic, SystemParams};
use crate::dists::ServiceDist;
use crate::error::{Error, Result};
use crate::quad::{grows_without_bound, Quad};

/// `E[sqrt(Z)]` and the resulting bounds for `n` i.i.d. samples.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectabilityReport {
    pub mean_sqrt_z: f64,
    pub hellinger_n: f64,
    pub tv_lower: f64,
    pub tv_upper: f64,
    pub pe_lower: f64,
}

impl DetectabilityReport {
    /// Build the report from the per-sample deficit `1 - E[sqrt(Z)]`.
    pub fn from_deficit(deficit: f64, n: u64) -> Self {
        let hellinger_n = if deficit <= 0.0 { 0.0 } else { -expm1(n as f64 * log1p(-deficit.min(1.0))) };
        let tv_upper = sqrt(2.0 * hellinger_n).min(1.0);
        DetectabilityReport {
            mean_sqrt_z: 1.0 - deficit,
            hellinger_n,
            tv_lower: hellinger_n,
            tv_upper,
            pe_lower: 1.0 - tv_upper,
        }
    }
}

/// Second moment of the interference kernel, or evidence that it diverges.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum C0 {
    Finite { value: f64 },
    /// Truncated integrals over `x` in `[0, cutoff]`, growing without bound.
    Divergent { cutoffs: Vec<f64>, truncated: Vec<f64> },
}

impl C0 {
    pub fn value(&self) -> Option<f64> {
        match self {
            C0::Finite { value } => Some(*value),
            C0::Divergent { .. } => None,
        }
    }
}

/// Runs a quadrature whose integrand can fail, surfacing the first error.
pub(crate) struct Fallible {
    err: RefCell<Option<Error>>,
}

impl Fallible {
    pub(crate) fn new() -> Self {
        Fallible { err: RefCell::new(None) }
    }

    pub(crate) fn wrap<'a, F: Fn(f64) -> Result<f64> + 'a>(&'a self, f: F) -> impl Fn(f64) -> f64 + 'a {
        move |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                let mut slot = self.err.borrow_mut();
                if slot.is_none() {
                    *slot = Some(e);
                }
                0.0
            }
        }
    }

    pub(crate) fn finish(&self, r: Result<crate::quad::Integral>) -> Result<f64> {
        if let Some(e) = self.err.borrow_mut().take() {
            return Err(e);
        }
        r.map(|i| i.value)
    }
}

/// `w * a * b` without spurious overflow when `w` is tiny and `a b` huge.
#[inline]
pub(crate) fn weighted_product(w: f64, a: f64, b: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let ab = a * b;
    if ab.is_finite() {
        return w * ab;
    }
    if !(a.is_finite() && b.is_finite()) {
        return f64::INFINITY;
    }
    let sign = if (a < 0.0) ^ (b < 0.0) { -1.0 } else { 1.0 };
    sign * exp(log(w) + log(a.abs()) + log(b.abs()))
}

/// `(sqrt(1 + d) - 1)^2`, accurate for small `d`.
#[inline]
pub(crate) fn sqrt_gap_sq(d: f64) -> f64 {
    let s = sqrt((1.0 + d).max(0.0));
    let g = d / (s + 1.0);
    g * g
}

/// Abscissa where `q * R(x)` reaches order one, if the kernel grows.
pub(crate) fn growth_break(params: &SystemParams, q: f64) -> Option<f64> {
    let growth = params.g1.max_rate() - params.g2.min_rate();
    if growth > 0.0 && q > 0.0 && q < 1.0 {
        Some(-log(q) / growth)
    } else {
        None
    }
}

fn deficit_quad() -> Quad {
    Quad::default().with_rel_tol(1e-10).with_abs_tol(1e-300)
}

/// Per-sample deficit `1 - E[sqrt(Z)] = E[(sqrt(Z) - 1)^2] / 2`, which holds
/// because `E[Z] = 1`.
pub(crate) fn deficit(params: &SystemParams, q: f64, statistic: Statistic) -> Result<f64> {
    check_q(q)?;
    if statistic == Statistic::IIARandomJob {
        return Err(Error::Unsupported("use iia_f for the random-job statistic"));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let lr = LikelihoodRatio::new(params, q, statistic)?;
    let g1 = &params.g1;
    let xs = params.x_scale();
    let breaks: Vec<f64> = growth_break(params, q).into_iter().collect();
    let quad = deficit_quad();
    if statistic.uses_idle_time() {
        let lam = params.lambda;
        let outer = Fallible::new();
        let r = quad.integrate_semi_inf(
            outer.wrap(|v| {
                let inner = Fallible::new();
                let r = quad.integrate_semi_inf_with_breaks(
                    inner.wrap(|x| {
                        let w = g1.density(x);
                        if w == 0.0 {
                            return Ok(0.0);
                        }
                        Ok(w * sqrt_gap_sq(lr.deviation_yv(x, v)?))
                    }),
                    0.0,
                    xs,
                    &breaks,
                );
                Ok(lam * exp(-lam * v) * inner.finish(r)?)
            }),
            0.0,
            1.0 / lam,
        );
        Ok(0.5 * outer.finish(r)?)
    } else {
        let f = Fallible::new();
        let r = quad.integrate_semi_inf_with_breaks(
            f.wrap(|x| {
                let w = g1.density(x);
                if w == 0.0 {
                    return Ok(0.0);
                }
                Ok(w * sqrt_gap_sq(lr.deviation_y(x)?))
            }),
            0.0,
            xs,
            &breaks,
        );
        Ok(0.5 * f.finish(r)?)
    }
}

/// `E[sqrt(Z)]` under the null for the chosen statistic.
pub fn mean_sqrt_z(params: &SystemParams, q: f64, statistic: Statistic) -> Result<f64> {
    deficit(params, q, statistic).map(|h| 1.0 - h)
}

/// Hellinger distance after `n` samples and the total-variation sandwich
/// `H <= TV <= sqrt(2 H)`.
pub fn detectability(params: &SystemParams, q: f64, n: u64, statistic: Statistic) -> Result<DetectabilityReport> {
    if n == 0 {
        return Err(Error::Domain("n must be >= 1"));
    }
    Ok(DetectabilityReport::from_deficit(deficit(params, q, statistic)?, n))
}

/// `E[rho(X, V)]` under `f0`, by two-dimensional quadrature.
pub fn expected_rho(params: &SystemParams) -> Result<f64> {
    let quad = Quad::default().with_abs_tol(1e-13);
    let lam = params.lambda;
    let g1 = &params.g1;
    let xs = params.x_scale();
    let outer = Fallible::new();
    let r = quad.integrate_semi_inf(
        outer.wrap(|v| {
            let inner = Fallible::new();
            let r = quad.integrate_semi_inf(
                inner.wrap(|x| {
                    let w = g1.density(x);
                    if w == 0.0 {
                        return Ok(0.0);
                    }
                    Ok(weighted_product(w, rho_unchecked(params, x, v)?, 1.0))
                }),
                0.0,
                xs,
            );
            Ok(lam * exp(-lam * v) * inner.finish(r)?)
        }),
        0.0,
        1.0 / lam,
    );
    outer.finish(r)
}

fn is_exp(d: &ServiceDist) -> bool {
    matches!(d, ServiceDist::Exponential { .. } | ServiceDist::Erlang { stages: 1, .. })
}

/// Finiteness of `C0` from the law parameters alone.
///
/// Exponential pairs need `mu1 < 2 mu2`; pairs involving a hyper-exponential
/// need `max mu1_l <= 2 min mu2_m` (non-strict, as stated for that case);
/// an Erlang Willie law with stage rate `nu1` needs `nu1 < 2 min mu2_l`.
/// Erlang Alice laws are not covered.
pub fn c0_finite(params: &SystemParams) -> Result<bool> {
    let (g1, g2) = (&params.g1, &params.g2);
    if matches!(g2, ServiceDist::Erlang { stages, .. } if *stages > 1) {
        return Err(Error::Unsupported("C0 finiteness is not characterised for an Erlang g2"));
    }
    let min2 = g2.min_rate();
    Ok(match g1 {
        ServiceDist::Erlang { stage_rate, .. } => *stage_rate < 2.0 * min2,
        _ if is_exp(g1) && is_exp(g2) => g1.max_rate() < 2.0 * min2,
        _ => g1.max_rate() <= 2.0 * min2,
    })
}

fn on_non_strict_boundary(params: &SystemParams) -> bool {
    let (a, b) = (params.g1.max_rate(), 2.0 * params.g2.min_rate());
    (a - b).abs() <= 1e-12 * b
}

/// `x`-integrand of `C0` after integrating out `v` (exact for
/// exponential-mixture `g2`, by quadrature otherwise).
fn c0_x_integrand(params: &SystemParams, x: f64) -> Result<f64> {
    let w = params.g1.density(x);
    if w == 0.0 {
        return Ok(0.0);
    }
    let lam = params.lambda;
    match exp_mixture(&params.g2) {
        Some(mix) => {
            let dev: Vec<f64> = mix.iter().map(|&(_, m)| exp_conv_ratio(&params.g1, m, x) - 1.0).collect();
            let mut acc = 0.0;
            for (l, &(wl, ml)) in mix.iter().enumerate() {
                for (m, &(wm, mm)) in mix.iter().enumerate() {
                    let c = wl * wm * lam / (lam + ml + mm);
                    acc += c * weighted_product(w, dev[l], dev[m]);
                }
            }
            Ok(acc)
        }
        None => {
            let f = Fallible::new();
            let r = Quad::default().with_abs_tol(1e-300).integrate_semi_inf(
                f.wrap(|v| {
                    let rho = rho_unchecked(params, x, v)?;
                    Ok(lam * exp(-lam * v) * rho * rho)
                }),
                0.0,
                1.0 / lam,
            );
            Ok(w * f.finish(r)?)
        }
    }
}

/// Cutoffs `{10, 100, 1000} / min-rate` for divergence probes.
pub(crate) fn probe_cutoffs(params: &SystemParams) -> Vec<f64> {
    let m = params.g1.min_rate().min(params.g2.min_rate());
    alloc::vec![10.0 / m, 100.0 / m, 1000.0 / m]
}

fn c0_probe(params: &SystemParams) -> (Vec<f64>, Vec<f64>) {
    let cutoffs = probe_cutoffs(params);
    let truncated = Quad::default().truncated(
        |x| c0_x_integrand(params, x).unwrap_or(f64::INFINITY),
        0.0,
        &cutoffs,
    );
    (cutoffs, truncated)
}

/// `C0 = E[rho(X, V)^2]`, or a divergence verdict with the growth curve.
pub fn c0(params: &SystemParams) -> C0 {
    let lemma = c0_finite(params).ok();
    let attempt_full = match lemma {
        Some(true) if on_non_strict_boundary(params) => {
            // the non-strict clause admits equality, where the integrand
            // can stop decaying; check before trusting it
            let (cutoffs, truncated) = c0_probe(params);
            if grows_without_bound(&cutoffs, &truncated) {
                return C0::Divergent { cutoffs, truncated };
            }
            true
        }
        Some(finite) => finite,
        None => {
            let (cutoffs, truncated) = c0_probe(params);
            if grows_without_bound(&cutoffs, &truncated) {
                return C0::Divergent { cutoffs, truncated };
            }
            true
        }
    };
    if attempt_full {
        let f = Fallible::new();
        let r = Quad::default().integrate_semi_inf(f.wrap(|x| c0_x_integrand(params, x)), 0.0, params.x_scale());
        if let Ok(value) = f.finish(r) {
            if value.is_finite() {
                return C0::Finite { value };
            }
        }
    }
    let (cutoffs, truncated) = c0_probe(params);
    C0::Divergent { cutoffs, truncated }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn report_arithmetic() {
        let r = DetectabilityReport::from_deficit(0.01, 1);
        assert!((r.hellinger_n - 0.01).abs() < 1e-15);
        assert!((r.tv_upper - sqrt(0.02)).abs() < 1e-15);
        assert!((r.tv_upper - 0.1414).abs() < 1e-4);
        assert_eq!(r.tv_lower, r.hellinger_n);
        assert_eq!(r.pe_lower, 1.0 - r.tv_upper);
        let z = DetectabilityReport::from_deficit(0.0, 1000);
        assert_eq!((z.hellinger_n, z.tv_upper, z.pe_lower), (0.0, 0.0, 1.0));
    }

    #[test]
    fn q_zero_gives_one() {
        let p = SystemParams::exp_exp(0.5, 1.0, 1.0).unwrap();
        for s in [Statistic::YV, Statistic::YOnly, Statistic::IIYV, Statistic::IIYOnly] {
            assert_eq!(mean_sqrt_z(&p, 0.0, s).unwrap(), 1.0);
        }
    }

    #[test]
    fn strictly_below_one_for_positive_q() {
        let p = SystemParams::exp_exp(0.5, 1.4, 1.0).unwrap();
        for s in [Statistic::YV, Statistic::YOnly, Statistic::IIYV, Statistic::IIYOnly] {
            for &q in &[1e-4, 0.1, 1.0] {
                let m = mean_sqrt_z(&p, q, s).unwrap();
                assert!(m < 1.0 && m > 0.0, "{s:?} q={q}: {m}");
            }
        }
    }

    #[test]
    fn deficit_agrees_with_direct_sqrt_integral() {
        let p = SystemParams::new(
            0.6,
            ServiceDist::erlang(2, 2.5).unwrap(),
            ServiceDist::hyper_exponential(vec![(0.5, 1.0), (0.5, 3.0)]).unwrap(),
        )
        .unwrap();
        let q = 0.4;
        let lr = LikelihoodRatio::new(&p, q, Statistic::YOnly).unwrap();
        let direct = Quad::default()
            .with_rel_tol(1e-12)
            .integrate_semi_inf(
                |x| {
                    let w = p.g1.density(x);
                    if w == 0.0 {
                        0.0
                    } else {
                        w * sqrt(lr.ratio_y(x).unwrap())
                    }
                },
                0.0,
                1.0,
            )
            .unwrap()
            .value;
        let m = mean_sqrt_z(&p, q, Statistic::YOnly).unwrap();
        assert!((m - direct).abs() < 1e-9, "{m} vs {direct}");
    }

    #[test]
    fn ii_statistic_needs_exponential_g2() {
        let p = SystemParams::new(0.5, ServiceDist::exponential(1.0).unwrap(), ServiceDist::erlang(2, 2.0).unwrap())
            .unwrap();
        assert!(matches!(mean_sqrt_z(&p, 0.2, Statistic::IIYV), Err(Error::Unsupported(_))));
        assert!(matches!(mean_sqrt_z(&p, 0.2, Statistic::IIARandomJob), Err(Error::Unsupported(_))));
    }

    #[test]
    fn c0_exponential_reduction() {
        // lambda/(lambda + 2 mu) * E[(mu X - 1)^2] with E[(mu X - 1)^2] = 1
        let p = SystemParams::exp_exp(0.5, 1.0, 1.0).unwrap();
        let v = c0(&p).value().unwrap();
        assert!((v - 0.2).abs() < 1e-9, "{v}");
    }

    #[test]
    fn c0_matches_two_dimensional_oracle() {
        let p = SystemParams::exp_exp(0.7, 1.5, 1.0).unwrap();
        let quad = Quad::default();
        let oracle = quad
            .integrate_semi_inf(
                |v| {
                    0.7 * exp(-0.7 * v)
                        * quad
                            .integrate_semi_inf(
                                |x| {
                                    let w = p.g1.density(x);
                                    if w == 0.0 {
                                        return 0.0;
                                    }
                                    let r = rho_unchecked(&p, x, v).unwrap();
                                    w * r * r
                                },
                                0.0,
                                1.0,
                            )
                            .unwrap()
                            .value
                },
                0.0,
                1.0 / 0.7,
            )
            .unwrap()
            .value;
        let v = c0(&p).value().unwrap();
        assert!((v - oracle).abs() < 1e-8 * oracle, "{v} vs {oracle}");
    }

    #[test]
    fn c0_divergence_verdicts() {
        let p = SystemParams::exp_exp(0.5, 2.0, 1.0).unwrap();
        assert!(!c0_finite(&p).unwrap());
        match c0(&p) {
            C0::Divergent { cutoffs, truncated } => {
                assert!(grows_without_bound(&cutoffs, &truncated));
                assert!(truncated[1] > 5.0 * truncated[0]);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        let p = SystemParams::exp_exp(0.5, 3.0, 1.0).unwrap();
        assert!(matches!(c0(&p), C0::Divergent { .. }));
    }

    #[test]
    fn c0_finite_clauses() {
        let e = |m1, m2| SystemParams::exp_exp(0.5, m1, m2).unwrap();
        assert!(c0_finite(&e(1.9, 1.0)).unwrap());
        assert!(!c0_finite(&e(2.0, 1.0)).unwrap());
        let hh = SystemParams::new(
            0.5,
            ServiceDist::hyper_exponential(vec![(0.5, 1.0), (0.5, 2.0)]).unwrap(),
            ServiceDist::hyper_exponential(vec![(0.5, 1.0), (0.5, 4.0)]).unwrap(),
        )
        .unwrap();
        assert!(c0_finite(&hh).unwrap());
        let eh = SystemParams::new(
            0.3,
            ServiceDist::erlang(2, 1.0).unwrap(),
            ServiceDist::hyper_exponential(vec![(0.5, 0.6), (0.5, 4.0)]).unwrap(),
        )
        .unwrap();
        assert!(c0_finite(&eh).unwrap());
        assert!(c0(&eh).value().is_some());
        let ee = SystemParams::new(0.5, ServiceDist::exponential(1.0).unwrap(), ServiceDist::erlang(2, 2.0).unwrap())
            .unwrap();
        assert!(matches!(c0_finite(&ee), Err(Error::Unsupported(_))));
    }

    #[test]
    fn c0_boundary_of_non_strict_clause_is_caught_numerically() {
        // max rate of g1 equals twice the min rate of g2: the clause says
        // finite, the integral grows linearly.
        let hh = SystemParams::new(
            0.5,
            ServiceDist::hyper_exponential(vec![(1.0, 2.0)]).unwrap(),
            ServiceDist::hyper_exponential(vec![(0.5, 1.0), (0.5, 3.0)]).unwrap(),
        )
        .unwrap();
        assert!(c0_finite(&hh).unwrap());
        assert!(matches!(c0(&hh), C0::Divergent { .. }));
    }

    #[test]
    fn erlang_g2_c0_uses_probe() {
        let p = SystemParams::new(0.5, ServiceDist::exponential(1.0).unwrap(), ServiceDist::erlang(2, 2.0).unwrap())
            .unwrap();
        let v = c0(&p).value().expect("finite");
        assert!(v > 0.0 && v.is_finite());
    }

    #[test]
    fn expected_rho_vanishes() {
        let cases = [
            SystemParams::exp_exp(0.5, 1.0, 1.0).unwrap(),
            SystemParams::new(
                0.5,
                ServiceDist::erlang(2, 2.0).unwrap(),
                ServiceDist::hyper_exponential(vec![(0.3, 0.8), (0.7, 2.0)]).unwrap(),
            )
            .unwrap(),
            SystemParams::new(0.5, ServiceDist::exponential(1.0).unwrap(), ServiceDist::erlang(2, 2.0).unwrap())
                .unwrap(),
        ];
        for p in &cases {
            let e = expected_rho(p).unwrap();
            assert!(e.abs() < 1e-6, "{p:?}: {e}");
        }
    }
}
