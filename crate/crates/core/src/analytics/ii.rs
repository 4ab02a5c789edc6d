use super::ratio::{check_q, LikelihoodRatio};
use super::{Statistic, SystemParams};
use crate::error::Result;

/// Density ratios and expected insertions under the insert-at-idle policy.
#[derive(Debug, Clone)]
pub struct IiQuantities {
    q: f64,
    p_bar: f64,
    yv: LikelihoodRatio,
    y: LikelihoodRatio,
}

/// Needs an exponential `g2`.
pub fn ii_quantities(params: &SystemParams, q: f64) -> Result<IiQuantities> {
    check_q(q)?;
    Ok(IiQuantities {
        q,
        p_bar: params.p_bar(),
        yv: LikelihoodRatio::new(params, q, Statistic::IIYV)?,
        y: LikelihoodRatio::new(params, q, Statistic::IIYOnly)?,
    })
}

impl IiQuantities {
    /// `f_{+,1}(x, v) / f0(x, v) = 1 + q e^{-mu2 (1-q) v} (R(x) - 1)`.
    pub fn density_ratio(&self, x: f64, v: f64) -> Result<f64> {
        self.yv.ratio_yv(x, v)
    }

    /// Ratio of the `Y` marginals, `1 + p q / (1 - (1-p) q) (R(x) - 1)`.
    pub fn density_ratio_y(&self, x: f64) -> Result<f64> {
        self.y.ratio_y(x)
    }

    /// Expected insertions over `n` W-BPs, `n q / (1 - (1-p) q)`.
    pub fn t_plus(&self, n: f64) -> f64 {
        n * self.q / (1.0 - self.p_bar * self.q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Quad;
    use libm::exp;

    #[test]
    fn trivial_cases() {
        let p = SystemParams::exp_exp(0.5, 1.0, 1.0).unwrap();
        let ii = ii_quantities(&p, 0.0).unwrap();
        assert_eq!(ii.density_ratio(2.0, 0.5).unwrap(), 1.0);
        assert_eq!(ii.t_plus(10.0), 0.0);
        let ii = ii_quantities(&p, 1.0).unwrap();
        assert!((ii.t_plus(10.0) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn y_marginal_integrates_out_v() {
        let p = SystemParams::exp_exp(0.5, 1.3, 1.0).unwrap();
        let ii = ii_quantities(&p, 0.6).unwrap();
        for &x in &[0.2, 1.0, 2.5] {
            let m = Quad::default()
                .integrate_semi_inf(|v| 0.5 * exp(-0.5 * v) * ii.density_ratio(x, v).unwrap(), 0.0, 2.0)
                .unwrap()
                .value;
            assert!((m - ii.density_ratio_y(x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn normalised() {
        let p = SystemParams::exp_exp(0.5, 1.5, 1.0).unwrap();
        let ii = ii_quantities(&p, 0.4).unwrap();
        let quad = Quad::default();
        let total = quad
            .integrate_semi_inf(
                |v| {
                    0.5 * exp(-0.5 * v)
                        * quad
                            .integrate_semi_inf(
                                |x| {
                                    let w = 1.5 * exp(-1.5 * x);
                                    if w == 0.0 {
                                        0.0
                                    } else {
                                        w * ii.density_ratio(x, v).unwrap()
                                    }
                                },
                                0.0,
                                1.0,
                            )
                            .unwrap()
                            .value
                },
                0.0,
                2.0,
            )
            .unwrap()
            .value;
        assert!((total - 1.0).abs() < 1e-7);
    }
}
