//! JSON input formats: system config, policies, detectors and scaling specs.
//!
//! ```json
//! {"lambda": 0.5,
//!  "g1": {"kind": "exp", "rate": 1.0},
//!  "g2": {"kind": "hyperexp", "branches": [{"weight": 0.4, "rate": 2.0}, {"weight": 0.6, "rate": 0.5}]}}
//! ```

use std::fs;
use std::path::Path;

use covertq_core::analytics::{BatchPMF, Statistic, SystemParams};
use covertq_core::detect::DetectorSpec;
use covertq_core::simqueue::Policy;
use covertq_core::ServiceDist;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistLiteral {
    Exp { rate: f64 },
    Hyperexp { branches: Vec<Branch> },
    /// `rate` is the per-stage rate.
    Erlang { stages: u32, rate: f64 },
}

impl DistLiteral {
    pub fn build(&self) -> AppResult<ServiceDist> {
        Ok(match self {
            DistLiteral::Exp { rate } => ServiceDist::exponential(*rate)?,
            DistLiteral::Hyperexp { branches } => {
                ServiceDist::hyper_exponential(branches.iter().map(|b| (b.weight, b.rate)).collect())?
            }
            DistLiteral::Erlang { stages, rate } => ServiceDist::erlang(*stages, *rate)?,
        })
    }

    pub fn from_dist(d: &ServiceDist) -> Self {
        match d {
            ServiceDist::Exponential { rate } => DistLiteral::Exp { rate: *rate },
            ServiceDist::HyperExponential { branches } => DistLiteral::Hyperexp {
                branches: branches.iter().map(|&(weight, rate)| Branch { weight, rate }).collect(),
            },
            ServiceDist::Erlang { stages, stage_rate } => DistLiteral::Erlang { stages: *stages, rate: *stage_rate },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub lambda: f64,
    pub g1: DistLiteral,
    pub g2: DistLiteral,
}

impl SystemConfig {
    pub fn params(&self) -> AppResult<SystemParams> {
        Ok(SystemParams::new(self.lambda, self.g1.build()?, self.g2.build()?)?)
    }

    pub fn exp_exp(lambda: f64, mu1: f64, mu2: f64) -> Self {
        SystemConfig { lambda, g1: DistLiteral::Exp { rate: mu1 }, g2: DistLiteral::Exp { rate: mu2 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyJson {
    None,
    Iebp { q: f64 },
    Ii { q: f64 },
    /// `batch[s]` is `Q(s)`.
    Iia { q: f64, batch: Vec<f64> },
    IiaGeometric { q: f64, a: f64 },
}

impl PolicyJson {
    pub fn build(&self) -> AppResult<Policy> {
        Ok(match self {
            PolicyJson::None => Policy::NoInsertion,
            PolicyJson::Iebp { q } => Policy::IEBP { q: *q },
            PolicyJson::Ii { q } => Policy::II { q: *q },
            PolicyJson::Iia { q, batch } => Policy::IIA { q: *q, batch: BatchPMF::new(batch.clone())? },
            PolicyJson::IiaGeometric { q, a } => Policy::IIAGeometric { q: *q, a: *a },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticJson {
    Yv,
    YOnly,
    IiYv,
    IiYOnly,
    IiaRandomJob,
}

impl From<StatisticJson> for Statistic {
    fn from(s: StatisticJson) -> Self {
        match s {
            StatisticJson::Yv => Statistic::YV,
            StatisticJson::YOnly => Statistic::YOnly,
            StatisticJson::IiYv => Statistic::IIYV,
            StatisticJson::IiYOnly => Statistic::IIYOnly,
            StatisticJson::IiaRandomJob => Statistic::IIARandomJob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorJson {
    pub statistic: StatisticJson,
    pub assumed_q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_j: Option<f64>,
}

impl DetectorJson {
    pub fn build(&self) -> AppResult<DetectorSpec> {
        let statistic = Statistic::from(self.statistic);
        if statistic != Statistic::IIARandomJob {
            return Ok(DetectorSpec::new(statistic, self.assumed_q));
        }
        match (&self.batch, self.pi_j) {
            (Some(b), Some(pi)) => Ok(DetectorSpec::random_job(self.assumed_q, BatchPMF::new(b.clone())?, pi)),
            _ => Err(AppError::Config("iia_random_job needs `batch` and `pi_j`".into())),
        }
    }
}

/// Read `arg` as inline JSON, or as a path to a JSON file.
pub fn parse_json_arg<T: serde::de::DeserializeOwned>(arg: &str) -> AppResult<T> {
    let text = if arg.trim_start().starts_with('{') || arg.trim_start().starts_with('[') {
        arg.to_owned()
    } else {
        fs::read_to_string(arg).map_err(|e| AppError::Config(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{arg}: {e}")))
}

pub fn load_config(path: &Path) -> AppResult<SystemConfig> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dist_literals_round_trip() {
        let text = r#"{"lambda":0.5,"g1":{"kind":"erlang","stages":2,"rate":3.0},
            "g2":{"kind":"hyperexp","branches":[{"weight":0.25,"rate":1.0},{"weight":0.75,"rate":4.0}]}}"#;
        let cfg: SystemConfig = serde_json::from_str(text).unwrap();
        let p = cfg.params().unwrap();
        assert_eq!(p.g1, ServiceDist::erlang(2, 3.0).unwrap());
        assert_eq!(DistLiteral::from_dist(&p.g2), cfg.g2);
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg = SystemConfig::exp_exp(0.5, -1.0, 1.0);
        assert!(matches!(cfg.params(), Err(AppError::Core(_))));
        assert!(serde_json::from_str::<SystemConfig>(r#"{"lambda":1,"g1":{"kind":"weibull"}}"#).is_err());
        let bad = PolicyJson::Iia { q: 0.1, batch: vec![0.5, 0.2] };
        assert!(bad.build().is_err());
    }

    #[test]
    fn policy_and_detector_json() {
        let p: PolicyJson = serde_json::from_str(r#"{"kind":"iia","q":0.2,"batch":[0,1]}"#).unwrap();
        assert_eq!(p.build().unwrap().q(), 0.2);
        let p: PolicyJson = serde_json::from_str(r#"{"kind":"none"}"#).unwrap();
        assert_eq!(p.build().unwrap(), Policy::NoInsertion);
        let d: DetectorJson = serde_json::from_str(r#"{"statistic":"yv","assumed_q":0.3}"#).unwrap();
        assert_eq!(d.build().unwrap(), DetectorSpec::new(Statistic::YV, 0.3));
        let d: DetectorJson = serde_json::from_str(r#"{"statistic":"iia_random_job","assumed_q":0.3}"#).unwrap();
        assert!(matches!(d.build(), Err(AppError::Config(_))));
    }
}
