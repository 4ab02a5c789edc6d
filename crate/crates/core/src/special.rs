//! Incomplete-gamma helpers for integer shape.

use libm::{exp, expm1, lgamma, log};

/// Regularized lower incomplete gamma `P(k, y)` for integer `k >= 1`.
pub fn gamma_p_int(k: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let kf = k as f64;
    if y < kf + 1.0 {
        gamma_p_series(kf, y)
    } else {
        1.0 - gamma_q_sum(k, y)
    }
}

/// Regularized upper incomplete gamma `Q(k, y) = 1 - P(k, y)`.
pub fn gamma_q_int(k: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let kf = k as f64;
    if y < kf + 1.0 {
        1.0 - gamma_p_series(kf, y)
    } else {
        gamma_q_sum(k, y)
    }
}

fn gamma_p_series(kf: f64, y: f64) -> f64 {
    let lead = exp(kf * log(y) - y - lgamma(kf + 1.0));
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = 1.0;
    while term > 1e-17 * sum {
        term *= y / (kf + j);
        sum += term;
        j += 1.0;
    }
    lead * sum
}

// e^{-y} sum_{j<k} y^j / j!, each term in log space.
fn gamma_q_sum(k: u32, y: f64) -> f64 {
    let ly = log(y);
    (0..k)
        .map(|j| {
            let jf = j as f64;
            exp(jf * ly - y - lgamma(jf + 1.0))
        })
        .sum()
}

/// `mu^s / (s-1)! * int_0^x t^{s-1} e^{c t} dt`, i.e. the ratio
/// `(g * h_s)(x) / g(x)` for `g` exponential with rate `a = c + mu` and
/// `h_s` the `s`-stage Erlang density with stage rate `mu`.
pub fn erlang_exp_conv_ratio(s: u32, mu: f64, c: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let sf = s as f64;
    if s == 1 {
        return if c == 0.0 { mu * x } else { mu * expm1(c * x) / c };
    }
    if c == 0.0 {
        return exp(sf * log(mu * x) - lgamma(sf + 1.0));
    }
    if c < 0.0 {
        let b = -c;
        return exp(sf * log(mu / b)) * gamma_p_int(s, b * x);
    }
    let cx = c * x;
    let mut term = 1.0;
    let mut sum = 1.0 / sf;
    let mut j = 1.0;
    loop {
        term *= cx / j;
        let add = term / (sf + j);
        sum += add;
        if j > cx && add < 1e-17 * sum {
            break;
        }
        j += 1.0;
    }
    exp(sf * log(mu * x) - lgamma(sf)) * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_p_matches_erlang_sum() {
        // P(2, y) = 1 - e^{-y}(1 + y)
        for &y in &[0.1, 1.0, 2.0, 3.5, 10.0] {
            let want = 1.0 - exp(-y) * (1.0 + y);
            assert!((gamma_p_int(2, y) - want).abs() < 1e-14, "y={y}");
            assert!((gamma_q_int(2, y) - (1.0 - want)).abs() < 1e-14);
        }
    }

    #[test]
    fn conv_ratio_branches_agree_near_c_zero() {
        for s in 1..5 {
            let a = erlang_exp_conv_ratio(s, 1.3, 1e-9, 2.0);
            let b = erlang_exp_conv_ratio(s, 1.3, 0.0, 2.0);
            let c = erlang_exp_conv_ratio(s, 1.3, -1e-9, 2.0);
            assert!((a - b).abs() < 1e-7 * b && (c - b).abs() < 1e-7 * b);
        }
    }

    #[test]
    fn conv_ratio_two_stage_closed_form() {
        // mu^2 int_0^x t e^{ct} dt = mu^2 (e^{cx}(cx-1)+1)/c^2
        let (mu, x) = (0.8, 3.0);
        for &c in &[-2.0, -0.3, 0.4, 1.5] {
            let want = mu * mu * (exp(c * x) * (c * x - 1.0) + 1.0) / (c * c);
            let got = erlang_exp_conv_ratio(2, mu, c, x);
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "c={c}");
        }
    }
}
