use super::kernel::g2_hat_first_moment;
use super::ratio::check_q;
use super::SystemParams;
use crate::error::{Error, Result};

/// Expected Willie jobs served over `n` W-BPs under IEBP, with its bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwReport {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `T_W(n) = n (1 + lambda q int t g2_hat(t) dt) / (1 - rho1)`.
pub fn t_w(params: &SystemParams, q: f64, n: u64) -> Result<TwReport> {
    check_q(q)?;
    if n == 0 {
        return Err(Error::Domain("n must be >= 1"));
    }
    let n = n as f64;
    let m1 = if q == 0.0 { 0.0 } else { g2_hat_first_moment(params)? };
    let idle = 1.0 - params.rho1;
    Ok(TwReport {
        value: n * (1.0 + params.lambda * q * m1) / idle,
        lower: n,
        upper: n * (1.0 + q * params.rho2) / idle,
    })
}
