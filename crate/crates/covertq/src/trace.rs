//! JSON-lines traces, one record per busy period:
//! `{"bp":0,"n_jobs":2,"v":0.7,"y":1.1,"services":[1.1,0.4],"arrivals":[0.7,1.5]}`.

use std::io::{BufRead, Write};

use covertq_core::simqueue::{BusyPeriodObs, SimRun};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub bp: usize,
    pub n_jobs: usize,
    pub v: f64,
    pub y: f64,
    pub services: Vec<f64>,
    pub arrivals: Vec<f64>,
}

impl TraceRecord {
    pub fn new(bp: usize, obs: &BusyPeriodObs) -> Self {
        TraceRecord {
            bp,
            n_jobs: obs.n_jobs,
            v: obs.v,
            y: obs.y,
            services: obs.services.clone(),
            arrivals: obs.arrivals.clone(),
        }
    }

    fn check(&self) -> Result<(), &'static str> {
        if self.n_jobs == 0 || self.services.len() != self.n_jobs || self.arrivals.len() != self.n_jobs {
            return Err("n_jobs must match services and arrivals");
        }
        if self.y != self.services[0] {
            return Err("y must equal services[0]");
        }
        if !(self.v >= 0.0) || self.services.iter().any(|&s| !(s > 0.0)) {
            return Err("v must be >= 0 and services > 0");
        }
        if self.arrivals.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("arrivals must be strictly increasing");
        }
        Ok(())
    }

    pub fn into_obs(self) -> BusyPeriodObs {
        BusyPeriodObs { n_jobs: self.n_jobs, arrivals: self.arrivals, services: self.services, y: self.y, v: self.v }
    }
}

pub fn write_trace<W: Write>(run: &SimRun, mut out: W) -> AppResult<()> {
    for (j, bp) in run.bps.iter().enumerate() {
        serde_json::to_writer(&mut out, &TraceRecord::new(j, bp)).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Blank lines are skipped; any other malformed line is an error naming it.
pub fn read_trace<R: BufRead>(input: R) -> AppResult<Vec<BusyPeriodObs>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| AppError::Config(format!("trace line {}: {e}", i + 1)))?;
        rec.check().map_err(|e| AppError::Config(format!("trace line {}: {e}", i + 1)))?;
        out.push(rec.into_obs());
    }
    if out.is_empty() {
        return Err(AppError::Config("trace has no records".into()));
    }
    Ok(out)
}
