//! Adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Finite intervals are bisected globally, always splitting the interval
//! with the largest error estimate. A semi-infinite range `[a, inf)` is
//! mapped onto `[0, 1)` by `x = a + L t / (1 - t)`, where `L` is the decay
//! length of the integrand (e.g. the reciprocal of the slowest rate).

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quad {
    fn default() -> Self {
        Quad { rel_tol: 1e-9, abs_tol: 1e-14, max_intervals: 2000 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(Error::NonFinite { at: c });
    }
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut fv = [0.0f64; 14];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (x1, x2) = (c - dx, c + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(Error::NonFinite { at: x1 });
        }
        if !f2.is_finite() {
            return Err(Error::NonFinite { at: x2 });
        }
        fv[2 * j] = f1;
        fv[2 * j + 1] = f2;
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut asc = WGK[7] * (fc - mean).abs();
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
        abs += WGK[j] * (fv[2 * j].abs() + fv[2 * j + 1].abs());
    }
    let hk = h.abs();
    let (asc, abs) = (asc * hk, abs * hk);
    let mut err = ((kron - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        let scaled = libm::pow(200.0 * err / asc, 1.5);
        err = if scaled < 1.0 { asc * scaled } else { asc };
    }
    let floor = 50.0 * f64::EPSILON * abs;
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && err < floor {
        err = floor;
    }
    Ok((kron * h, err))
}

impl Quad {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        self.integrate_points(&f, &[a, b])
    }

    /// Integrate `f` over consecutive intervals `points[0]..points[n-1]`,
    /// starting from a split at every interior point.
    pub fn integrate_points<F: Fn(f64) -> f64>(&self, f: &F, points: &[f64]) -> Result<Integral> {
        assert!(points.len() >= 2, "need at least two points");
        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        let mut total_err = 0.0;
        let mut evals = 0;
        for w in points.windows(2) {
            if w[1] == w[0] {
                continue;
            }
            let (value, error) = gk15(f, w[0], w[1])?;
            evals += 15;
            total += value;
            total_err += error;
            heap.push(Segment { a: w[0], b: w[1], value, error });
        }
        loop {
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= target {
                return Ok(Integral { value: total, error: total_err, evals });
            }
            if heap.len() >= self.max_intervals {
                return Err(Error::Quadrature { value: total, error: total_err, intervals: heap.len() });
            }
            let Some(worst) = heap.pop() else {
                return Ok(Integral { value: total, error: total_err, evals });
            };
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Interval can no longer be split in floating point.
                return Err(Error::Quadrature { value: total, error: total_err, intervals: heap.len() + 1 });
            }
            let (v1, e1) = gk15(f, worst.a, mid)?;
            let (v2, e2) = gk15(f, mid, worst.b)?;
            evals += 30;
            total += v1 + v2 - worst.value;
            total_err += e1 + e2 - worst.error;
            heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
            heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        }
    }

    /// Integrate `f` over `[a, inf)` with decay length `scale`.
    pub fn integrate_semi_inf<F: Fn(f64) -> f64>(&self, f: F, a: f64, scale: f64) -> Result<Integral> {
        self.integrate_semi_inf_with_breaks(f, a, scale, &[])
    }

    /// As [`Quad::integrate_semi_inf`], with initial splits at the given
    /// abscissae (useful when the integrand changes shape far from `a`).
    pub fn integrate_semi_inf_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        a: f64,
        scale: f64,
        breaks: &[f64],
    ) -> Result<Integral> {
        let g = |t: f64| {
            let one_minus = 1.0 - t;
            let x = a + scale * t / one_minus;
            if !x.is_finite() {
                return 0.0;
            }
            let fx = f(x);
            if fx == 0.0 {
                0.0
            } else {
                fx * scale / (one_minus * one_minus)
            }
        };
        let mut pts = Vec::with_capacity(breaks.len() + 2);
        pts.push(0.0);
        for &b in breaks {
            if b > a && b.is_finite() {
                let d = b - a;
                pts.push(d / (d + scale));
            }
        }
        pts.push(1.0);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        self.integrate_points(&g, &pts)
    }

    /// Truncated integrals `int_a^{a+c} f` for each cutoff `c`.
    pub fn truncated<F: Fn(f64) -> f64>(&self, f: F, a: f64, cutoffs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(cutoffs.len());
        let mut pts = alloc::vec![a];
        for &c in cutoffs {
            pts.push(a + c);
            let v = match self.integrate_points(&f, &pts) {
                Ok(i) => i.value,
                Err(Error::Quadrature { value, .. }) => value,
                Err(_) => f64::INFINITY,
            };
            out.push(v);
        }
        out
    }
}

/// Growth verdict for a sequence of truncated integrals at increasing
/// cutoffs: `true` when the last log-log slope stays above `0.05` or any
/// value is non-finite.
pub fn grows_without_bound(cutoffs: &[f64], values: &[f64]) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return true;
    }
    let n = values.len();
    if n < 2 {
        return false;
    }
    let (i0, i1) = (values[n - 2].abs(), values[n - 1].abs());
    if i1 == 0.0 {
        return false;
    }
    if i0 == 0.0 {
        return true;
    }
    let slope = libm::log(i1 / i0) / libm::log(cutoffs[n - 1] / cutoffs[n - 2]);
    slope > 0.05
}
