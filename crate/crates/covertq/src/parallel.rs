//! Rayon-parallel error estimates. Every trial owns its seed path, so the
//! result equals the sequential `estimate_pe` bit for bit.

use covertq_core::analytics::SystemParams;
use covertq_core::detect::{check_pe_args, run_trial, tally, Detector, DetectorSpec, Hypothesis, PEEstimate};
use covertq_core::simqueue::Policy;
use rayon::prelude::*;

use crate::error::AppResult;

pub fn estimate_pe_par(
    params: &SystemParams,
    policy: &Policy,
    spec: &DetectorSpec,
    n_bps: usize,
    trials: u64,
    seed: u64,
) -> AppResult<PEEstimate> {
    check_pe_args(n_bps, trials)?;
    policy.validate(params)?;
    let detector = Detector::new(spec, params)?;
    let outcomes = [Hypothesis::H0, Hypothesis::H1]
        .into_par_iter()
        .flat_map(|h| (0..trials).into_par_iter().map(move |i| (h, i)))
        .map(|(h, i)| run_trial(params, policy, &detector, n_bps, seed, h, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(tally(&outcomes, trials))
}
