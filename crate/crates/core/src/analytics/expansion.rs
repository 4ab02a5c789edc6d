//! `Xi(theta, x)` for exponential laws and its small-`theta` behaviour.
//!
//! Time is measured in units of `1/mu2`, so `X_r` is exponential with rate
//! `r = mu1/mu2` and `Z(q, x, v) = Xi(q e^{-mu2 v}, mu2 x)`.

use libm::{exp, expm1, log, sqrt};

use super::hellinger::sqrt_gap_sq;
use super::R_SNAP;
use crate::error::{Error, Result};
use crate::quad::Quad;

/// Leading-order terms next to the quadrature value of `E[sqrt(Xi(theta, X_r))]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpansionTerms {
    pub theta: f64,
    pub r: f64,
    pub xi: f64,
    /// `I_beta`, only for `r > 2`.
    pub i_beta: Option<f64>,
    /// Leading term of `E[sqrt(Xi)] - 1`; `None` for `r` in `[1, 2)`.
    pub f_r: Option<f64>,
    pub mean_sqrt_xi_exact: f64,
    /// `1 - mean_sqrt_xi_exact`, computed without cancellation.
    pub deficit: f64,
}

fn snap(r: f64) -> f64 {
    if (r - 1.0).abs() < R_SNAP {
        1.0
    } else {
        r
    }
}

fn check(theta: f64, r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain("theta must lie in [0, 1]"));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain("r must be positive"));
    }
    Ok(snap(r))
}

/// `Xi(theta, x) - 1` divided by `theta`.
fn xi_slope(r: f64, x: f64) -> f64 {
    if r == 1.0 {
        x - 1.0
    } else {
        expm1((r - 1.0) * x) / (r - 1.0) - 1.0
    }
}

/// `Xi(theta, x) = 1 + theta (expm1((r-1) x)/(r-1) - 1)`, or `1 + theta (x - 1)` at `r = 1`.
pub fn xi_fn(theta: f64, r: f64, x: f64) -> f64 {
    1.0 + theta * xi_slope(snap(r), x)
}

/// `1 - E[sqrt(Xi(theta, X_r))]`.
pub fn xi_deficit(theta: f64, r: f64) -> Result<f64> {
    let r = check(theta, r)?;
    if theta == 0.0 {
        return Ok(0.0);
    }
    let f = |x: f64| {
        let w = r * exp(-r * x);
        if w == 0.0 {
            return 0.0;
        }
        if r > 1.0 && (r - 1.0) * x > 600.0 {
            // (sqrt(1+d) - 1)^2 ~ d once d is astronomically large
            return r * theta * exp(-x) / (r - 1.0);
        }
        w * sqrt_gap_sq(theta * xi_slope(r, x))
    };
    let breaks = if r > 1.0 && theta < 1.0 { alloc::vec![-log(theta) / (r - 1.0)] } else { alloc::vec![] };
    let h = Quad::default()
        .with_rel_tol(1e-12)
        .with_abs_tol(1e-300)
        .integrate_semi_inf_with_breaks(f, 0.0, 1.0 / r, &breaks)?
        .value;
    Ok(0.5 * h)
}

/// `E[sqrt(Xi(theta, X_r))]` by quadrature.
pub fn mean_sqrt_xi(theta: f64, r: f64) -> Result<f64> {
    xi_deficit(theta, r).map(|h| 1.0 - h)
}

/// `E[sqrt(Xi(theta, X_r))]` from the law of `Xi(theta, X_r)` itself, as an
/// independent check of [`mean_sqrt_xi`]. Needs `theta > 0` and `r != 1`.
pub fn mean_sqrt_xi_integral_form(theta: f64, r: f64) -> Result<f64> {
    let r = check(theta, r)?;
    if theta == 0.0 || r == 1.0 {
        return Err(Error::Domain("integral form needs theta > 0 and r != 1"));
    }
    let beta = r / (r - 1.0);
    let quad = Quad::default().with_rel_tol(1e-12);
    if r < 1.0 {
        // beta < 0: Xi lives on [1 - theta, 1 - theta beta]
        let top = 1.0 - theta * beta;
        let a = sqrt(1.0 - theta);
        let b = sqrt(top);
        let i = quad.integrate(|y| libm::pow((top - y * y).max(0.0), -beta), a, b)?.value;
        Ok(a + libm::pow(theta * (1.0 - beta), beta) * i)
    } else {
        // density of Xi is beta a^beta / (z - 1 + theta beta)^{beta+1} above 1 - theta
        let a = theta * (beta - 1.0);
        let shift = 1.0 - theta * beta;
        let f = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            beta / u * exp(beta * log(a / u)) * sqrt((u + shift).max(0.0))
        };
        Ok(quad.integrate_semi_inf(f, a, a.max(1e-3))?.value)
    }
}

/// `I_beta = beta int_0^inf (1 + t/2 - sqrt(1 + t)) / t^{beta+1} dt` for `beta` in `(1, 2)`.
pub fn i_beta(beta: f64) -> Result<f64> {
    if !(beta > 1.0 && beta < 2.0) {
        return Err(Error::Domain("I_beta needs beta in (1, 2)"));
    }
    // t = e^s; the numerator is written as (t^2/4) / (1 + t/2 + sqrt(1+t))
    let quad = Quad::default().with_rel_tol(1e-12).with_abs_tol(1e-300);
    let small = |u: f64| {
        let t = exp(-u);
        exp(-(2.0 - beta) * u) * 0.25 / (1.0 + 0.5 * t + sqrt(1.0 + t))
    };
    let large = |s: f64| {
        let e = exp(-s);
        exp((1.0 - beta) * s) * 0.25 / (e + 0.5 + sqrt(e * e + e))
    };
    let lo = quad.integrate_semi_inf(small, 0.0, 1.0 / (2.0 - beta))?.value;
    let hi = quad.integrate_semi_inf(large, 0.0, 1.0 / (beta - 1.0))?.value;
    Ok(beta * (lo + hi))
}

/// Exact `theta^2` coefficient of `E[sqrt(Xi(theta, X_r))]` for `r < 2`,
/// namely `-E[D^2]/8 = r / (8 (r - 2))`.
pub fn theta2_coefficient(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 2.0) {
        return Err(Error::Domain("theta^2 coefficient exists only for 0 < r < 2"));
    }
    Ok(r / (8.0 * (r - 2.0)))
}

fn xi_r(theta: f64, r: f64) -> f64 {
    if r == 1.0 {
        return theta;
    }
    let beta = r / (r - 1.0);
    let num = if r < 1.0 { (1.0 - beta) * theta } else { (beta - 1.0) * theta };
    num / (1.0 - beta * theta)
}

/// Quadrature value and leading-order terms at `(theta, r)`.
///
/// The `r < 1` branch is `(1 - r) / (4 (r - 2)) theta^2`; see
/// [`theta2_coefficient`] for the coefficient the quadrature actually shows.
pub fn expansion(theta: f64, r: f64) -> Result<ExpansionTerms> {
    let r = check(theta, r)?;
    let deficit = xi_deficit(theta, r)?;
    let xi = xi_r(theta, r);
    let at_two = (r - 2.0).abs() < R_SNAP;
    let i_b = if r > 2.0 && !at_two { Some(i_beta(r / (r - 1.0))?) } else { None };
    let f_r = if theta == 0.0 {
        Some(0.0)
    } else if r < 1.0 {
        Some((1.0 - r) / (4.0 * (r - 2.0)) * theta * theta)
    } else if at_two {
        Some(0.25 * xi * xi * log(xi))
    } else {
        i_b.map(|ib| -ib * libm::pow(xi, r / (r - 1.0)))
    };
    Ok(ExpansionTerms { theta, r, xi, i_beta: i_b, f_r, mean_sqrt_xi_exact: 1.0 - deficit, deficit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::tgamma;

    fn i_beta_closed(beta: f64) -> f64 {
        // Mellin transform of (1+t)^{1/2} with its first two Taylor terms removed
        beta * tgamma(-beta) * tgamma(beta - 0.5) / (2.0 * sqrt(core::f64::consts::PI))
    }

    #[test]
    fn i_beta_against_gamma_closed_form() {
        for &b in &[1.05, 1.25, 1.5, 1.8, 1.95] {
            let got = i_beta(b).unwrap();
            let want = i_beta_closed(b);
            assert!((got - want).abs() < 1e-9 * want, "beta={b}: {got} vs {want}");
        }
        assert!((i_beta(1.5).unwrap() - 1.0).abs() < 1e-10);
        assert!(i_beta(2.0).is_err() && i_beta(1.0).is_err());
    }

    #[test]
    fn xi_r_one_branch() {
        assert_eq!(xi_fn(0.3, 1.0, 2.0), 1.3);
        assert!((xi_fn(0.3, 1.0 + 1e-12, 2.0) - 1.3).abs() < 1e-15);
        assert!((xi_fn(0.3, 1.5, 2.0) - (1.0 + 0.3 * (expm1(1.0) / 0.5 - 1.0))).abs() < 1e-15);
    }

    #[test]
    fn theta_zero() {
        for &r in &[0.5, 1.0, 1.5, 2.0, 3.0] {
            let e = expansion(0.0, r).unwrap();
            assert_eq!(e.mean_sqrt_xi_exact, 1.0);
            assert_eq!(e.f_r, Some(0.0));
        }
    }

    #[test]
    fn quadrature_matches_distributional_form() {
        for &r in &[0.3, 0.5, 0.9, 1.5, 2.0, 3.0, 6.0] {
            for &theta in &[0.05, 0.3, 0.7, 1.0] {
                let a = mean_sqrt_xi(theta, r).unwrap();
                let b = mean_sqrt_xi_integral_form(theta, r).unwrap();
                assert!((a - b).abs() < 1e-9, "r={r} theta={theta}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn r_one_by_direct_quadrature() {
        let theta = 0.4;
        let direct = Quad::default()
            .integrate_semi_inf(|x| exp(-x) * sqrt(1.0 + theta * (x - 1.0)), 0.0, 1.0)
            .unwrap()
            .value;
        assert!((mean_sqrt_xi(theta, 1.0).unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn small_theta_r_below_two_follows_second_moment() {
        for &r in &[0.5, 1.0, 1.5] {
            let theta = 1e-3;
            let c = xi_deficit(theta, r).unwrap() / (theta * theta);
            let want = -theta2_coefficient(r).unwrap();
            assert!((c - want).abs() < 2e-2 * want, "r={r}: {c} vs {want}");
        }
    }

    #[test]
    fn f_r_availability() {
        assert!(expansion(0.01, 1.5).unwrap().f_r.is_none());
        assert!(expansion(0.01, 1.0).unwrap().f_r.is_none());
        let e = expansion(0.01, 3.0).unwrap();
        assert!(e.i_beta.is_some() && e.f_r.unwrap() < 0.0);
        let e = expansion(0.01, 2.0).unwrap();
        assert!(e.i_beta.is_none() && e.f_r.unwrap() < 0.0);
        assert!((e.xi - 0.01 / 0.98).abs() < 1e-15);
        let e = expansion(0.01, 0.5).unwrap();
        assert!((e.xi - 2.0 * 0.01 / 1.01).abs() < 1e-15);
    }

    #[test]
    fn monotone_in_r() {
        let rs = [0.3, 0.8, 1.0, 1.7, 2.0, 2.5, 4.0];
        for &theta in &[0.01, 0.2, 0.6, 1.0] {
            for w in rs.windows(2) {
                let a = mean_sqrt_xi(theta, w[0]).unwrap();
                let b = mean_sqrt_xi(theta, w[1]).unwrap();
                assert!(b <= a + 1e-12, "theta={theta}: r {} -> {}: {a} {b}", w[0], w[1]);
            }
        }
    }
}
