//! TOML experiment files.
//!
//! ```toml
//! [model]
//! levels = [1.0]                      # l_1 .. l_(K-1)
//! base_rates = [1.0, 1.0]             # λ_i = μ_i
//! arrival_perturbation = [0.0, 0.0]   # λ̂_i
//! service_perturbation = [0.0, 1.0]   # μ̂_i, so b = (0, -1)
//!
//! [arrival]
//! family = "exponential"
//!
//! [service]
//! family = "erlang"
//! k = 2
//!
//! [sweep]                             # optional
//! n = [25, 100, 400]
//! events_per_n = 100000
//! replicas = 4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::RenewalSpec;
use crate::error::{Error, Result};
use crate::model::{HeavyTrafficModel, HeavyTrafficParams};

/// Renewal family as written in a config file. Hyperexponential `r2` and the
/// uniform endpoints may be omitted; they are then fixed by the unit mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpecEntry {
    Exponential,
    Deterministic,
    Erlang {
        k: u32,
    },
    Hyperexponential {
        p: f64,
        r1: f64,
        r2: Option<f64>,
    },
    Uniform {
        a: Option<f64>,
        b: Option<f64>,
        half_width: Option<f64>,
    },
}

impl SpecEntry {
    pub fn build(self) -> Result<RenewalSpec> {
        match self {
            Self::Exponential => Ok(RenewalSpec::Exponential),
            Self::Deterministic => Ok(RenewalSpec::Deterministic),
            Self::Erlang { k } => RenewalSpec::erlang(k),
            Self::Hyperexponential { p, r1, r2: None } => RenewalSpec::hyperexponential(p, r1),
            Self::Hyperexponential {
                p,
                r1,
                r2: Some(r2),
            } => RenewalSpec::Hyperexponential { p, r1, r2 }.validated(),
            Self::Uniform {
                half_width: Some(h),
                a: None,
                b: None,
            } => RenewalSpec::uniform(h),
            Self::Uniform {
                a: Some(a),
                b: Some(b),
                half_width: None,
            } => RenewalSpec::Uniform { a, b }.validated(),
            Self::Uniform { .. } => Err(Error::Parse(
                "uniform needs either `half_width` or both `a` and `b`".into(),
            )),
        }
    }
}

impl From<RenewalSpec> for SpecEntry {
    fn from(spec: RenewalSpec) -> Self {
        match spec {
            RenewalSpec::Exponential => Self::Exponential,
            RenewalSpec::Deterministic => Self::Deterministic,
            RenewalSpec::Erlang { k } => Self::Erlang { k },
            RenewalSpec::Hyperexponential { p, r1, r2 } => Self::Hyperexponential {
                p,
                r1,
                r2: Some(r2),
            },
            RenewalSpec::Uniform { a, b } => Self::Uniform {
                a: Some(a),
                b: Some(b),
                half_width: None,
            },
        }
    }
}

/// Sweep defaults that a config file may override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub n: Vec<u64>,
    /// Per-replica events at index `n` are `events_per_n · n`, unless `events` is set.
    pub events_per_n: u64,
    pub events: Option<u64>,
    pub replicas: u32,
    pub batches: usize,
    pub warmup_fraction: f64,
    pub sde_dt: f64,
    pub sde_horizon: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            n: vec![25, 100, 400],
            events_per_n: 100_000,
            events: None,
            replicas: 4,
            batches: 32,
            warmup_fraction: 0.1,
            sde_dt: 1e-3,
            sde_horizon: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: HeavyTrafficParams,
    arrival: SpecEntry,
    service: SpecEntry,
    #[serde(default)]
    sweep: SweepSection,
}

/// A parsed experiment file.
#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub model: HeavyTrafficModel,
    pub sweep: SweepSection,
}

impl LabConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let model = HeavyTrafficModel::new(raw.model, raw.arrival.build()?, raw.service.build()?)?;
        Ok(Self {
            model,
            sweep: raw.sweep,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let raw = RawConfig {
            model: self.model.params.clone(),
            arrival: self.model.arrival.into(),
            service: self.model.service.into(),
            sweep: self.sweep.clone(),
        };
        toml::to_string(&raw).map_err(|e| Error::Parse(e.to_string()))
    }
}
