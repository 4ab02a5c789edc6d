//! Goodness-of-fit and trend tests used by the verification reports.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// One-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
}

/// `P(K > t)` for the Kolmogorov distribution.
fn kolmogorov_sf(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Test `samples` against `cdf`, with the small-sample correction
/// `t = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    KsResult { d, p_value: kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: f64,
    pub p_value: f64,
}

/// Pearson test of observed counts against expected counts. Bins with
/// expected count below `min_expected` are pooled into one.
pub fn chi_square(observed: &[f64], expected: &[f64], min_expected: f64) -> ChiSquareResult {
    let (mut stat, mut bins) = (0.0, 0usize);
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        if e < min_expected {
            pool_o += o;
            pool_e += e;
        } else {
            stat += (o - e) * (o - e) / e;
            bins += 1;
        }
    }
    if pool_e > 0.0 {
        stat += (pool_o - pool_e) * (pool_o - pool_e) / pool_e;
        bins += 1;
    }
    let dof = bins.saturating_sub(1).max(1) as f64;
    let p_value = ChiSquared::new(dof).map(|c| c.sf(stat)).unwrap_or(f64::NAN);
    ChiSquareResult { statistic: stat, dof, p_value }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannKendall {
    pub s: f64,
    pub z: f64,
    /// One-sided p-value for a decreasing trend.
    pub p_decreasing: f64,
    /// One-sided p-value for an increasing trend.
    pub p_increasing: f64,
}

/// Mann-Kendall trend test with the tie-corrected variance and continuity
/// correction.
pub fn mann_kendall(xs: &[f64]) -> MannKendall {
    let n = xs.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += (xs[j] - xs[i]).partial_cmp(&0.0).map_or(0.0, |o| o as i32 as f64);
        }
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    let z = if var <= 0.0 || s == 0.0 {
        0.0
    } else {
        (s - s.signum()) / var.sqrt()
    };
    let normal = Normal::standard();
    MannKendall { s, z, p_decreasing: normal.cdf(z), p_increasing: normal.sf(z) }
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_tail_values() {
        // Classical critical values: P(K > 1.358) = 0.05, P(K > 1.628) = 0.01.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn ks_uniform_grid_passes() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_test(&xs, |x| x.clamp(0.0, 1.0));
        assert!(r.d <= 0.0005 + 1e-12);
        assert!(r.p_value > 0.99);
        let r = ks_test(&xs, |x| (x * x).clamp(0.0, 1.0));
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn chi_square_reference() {
        // On 2 dof the survival function is e^{-x/2}.
        let r = chi_square(&[12.0, 8.0, 10.0], &[10.0, 10.0, 10.0], 5.0);
        assert!((r.statistic - 0.8).abs() < 1e-12);
        assert_eq!(r.dof, 2.0);
        assert!((r.p_value - (-0.4f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn mann_kendall_reference() {
        let mk = mann_kendall(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(mk.s, -10.0);
        // var = 5*4*15/18 = 50/3, z = -9 / sqrt(50/3).
        assert!((mk.z + 9.0 / (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(mk.p_decreasing < 0.05);
        let flat = mann_kendall(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!((flat.s, flat.z), (0.0, 0.0));
    }

    #[test]
    fn autocorrelation_of_alternating_sequence() {
        let xs: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!((lag1_autocorrelation(&xs) + 0.99).abs() < 1e-12);
    }
}
