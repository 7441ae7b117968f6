//! Stationary balance residuals `E[Hf] + α_e E_e[Δ_e f] + α_d E_d[Δ_d f]`.
//!
//! `Hf = -a ∂f/∂x2 - s ∂f/∂x3` with clock speeds `a`, `s` fixed by the level
//! of `x1`. Along an inter-event interval both residuals drain linearly, so
//! the time integral of `Hf` is evaluated exactly from the derivative
//! formulas of each catalog entry.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::des::{run_stationary_with, EventKind, EventRecord, Observer, RunSettings};
use crate::error::{Error, Result};
use crate::model::{LevelPartition, PrelimitConfig};
use crate::stats::Estimate;

/// Closed catalog of test functions `f(x1, x2, x3)`.
///
/// `x2` and `x3` are unbounded; they are kept because the rate identities
/// are derived from them, and the residual stays finite for unit-mean clocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `x2`.
    ArrivalResidual,
    /// `x3`.
    ServiceResidual,
    /// `x1 ∧ (ell + 1)`.
    TruncatedLength { ell: u64 },
    /// `(x2 ∧ cutoff)^k`.
    ArrivalPower { k: u32, cutoff: f64 },
    /// `(x3 ∧ cutoff)^k`.
    ServicePower { k: u32, cutoff: f64 },
    /// `1(x1 ∈ S_level) (x2 ∧ cutoff)^k`.
    LevelArrivalPower { level: usize, k: u32, cutoff: f64 },
    /// `1(x1 ∈ S_level) (x3 ∧ cutoff)^k`.
    LevelServicePower { level: usize, k: u32, cutoff: f64 },
}

#[inline]
fn capped_power(x: f64, k: u32, cutoff: f64) -> f64 {
    x.min(cutoff).powi(k as i32)
}

impl TestFunction {
    pub fn eval(&self, x1: u64, x2: f64, x3: f64, partition: &LevelPartition) -> f64 {
        let on = |level: usize| partition.index_of(x1 as f64) + 1 == level;
        match *self {
            Self::ArrivalResidual => x2,
            Self::ServiceResidual => x3,
            Self::TruncatedLength { ell } => x1.min(ell + 1) as f64,
            Self::ArrivalPower { k, cutoff } => capped_power(x2, k, cutoff),
            Self::ServicePower { k, cutoff } => capped_power(x3, k, cutoff),
            Self::LevelArrivalPower { level, k, cutoff } => {
                if on(level) {
                    capped_power(x2, k, cutoff)
                } else {
                    0.0
                }
            }
            Self::LevelServicePower { level, k, cutoff } => {
                if on(level) {
                    capped_power(x3, k, cutoff)
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ Hf dt` over the interval preceding `r`.
    ///
    /// For `(x ∧ c)^k` the right derivative is `k x^{k-1} 1(x < c)`; its
    /// integral along `x(t) = x0 - a t` is `-(g(x0) - g(x1))` with
    /// `g(x) = (x ∧ c)^k`.
    pub fn generator_integral(&self, r: &EventRecord, partition: &LevelPartition) -> f64 {
        let drained = |k: u32, c: f64, start: f64, end: f64| {
            -(capped_power(start, k, c) - capped_power(end, k, c))
        };
        let on = |level: usize| partition.index_of(r.len_before as f64) + 1 == level;
        match *self {
            Self::ArrivalResidual => -r.arrival_rate * r.dt,
            Self::ServiceResidual => -r.service_rate * r.dt,
            Self::TruncatedLength { .. } => 0.0,
            Self::ArrivalPower { k, cutoff } => drained(k, cutoff, r.re_start, r.re_before),
            Self::ServicePower { k, cutoff } => drained(k, cutoff, r.rd_start, r.rd_before),
            Self::LevelArrivalPower { level, k, cutoff } => {
                if on(level) {
                    drained(k, cutoff, r.re_start, r.re_before)
                } else {
                    0.0
                }
            }
            Self::LevelServicePower { level, k, cutoff } => {
                if on(level) {
                    drained(k, cutoff, r.rd_start, r.rd_before)
                } else {
                    0.0
                }
            }
        }
    }

    /// `f(X(0)) - f(X(0-))` at the event.
    pub fn jump(&self, r: &EventRecord, partition: &LevelPartition) -> f64 {
        self.eval(r.len_after, r.re_after, r.rd_after, partition)
            - self.eval(r.len_before, r.re_before, r.rd_before, partition)
    }

    /// The three `x1 ∧ (ℓ + 1)` functions at the first boundary length and
    /// its neighbours, plus `x2` and `x3`.
    pub fn default_set(cfg: &PrelimitConfig) -> Vec<TestFunction> {
        let ell = cfg.boundary_lengths()[0];
        let mut set = vec![Self::ArrivalResidual, Self::ServiceResidual];
        for l in [ell.saturating_sub(1), ell, ell + 1] {
            set.push(Self::TruncatedLength { ell: l });
        }
        set
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::ArrivalResidual => write!(f, "x2"),
            Self::ServiceResidual => write!(f, "x3"),
            Self::TruncatedLength { ell } => write!(f, "min_x1:{ell}"),
            Self::ArrivalPower { k, cutoff } => write!(f, "pow_x2:{k}:{cutoff}"),
            Self::ServicePower { k, cutoff } => write!(f, "pow_x3:{k}:{cutoff}"),
            Self::LevelArrivalPower { level, k, cutoff } => {
                write!(f, "level_x2:{level}:{k}:{cutoff}")
            }
            Self::LevelServicePower { level, k, cutoff } => {
                write!(f, "level_x3:{level}:{k}:{cutoff}")
            }
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Parses the [`Display`](fmt::Display) form, e.g. `min_x1:10` or `pow_x2:2:5`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownTestFunction(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let int = |i: usize| {
            parts
                .get(i)
                .and_then(|p| p.parse::<u64>().ok())
                .ok_or_else(unknown)
        };
        let real = |i: usize| {
            parts
                .get(i)
                .and_then(|p| p.parse::<f64>().ok())
                .filter(|c| *c > 0.0)
                .ok_or_else(unknown)
        };
        let power =
            |i: usize| int(i).and_then(|k| if k >= 1 { Ok(k as u32) } else { Err(unknown()) });
        let f = match (parts[0], parts.len()) {
            ("x2", 1) => Self::ArrivalResidual,
            ("x3", 1) => Self::ServiceResidual,
            ("min_x1", 2) => Self::TruncatedLength { ell: int(1)? },
            ("pow_x2", 3) => Self::ArrivalPower {
                k: power(1)?,
                cutoff: real(2)?,
            },
            ("pow_x3", 3) => Self::ServicePower {
                k: power(1)?,
                cutoff: real(2)?,
            },
            ("level_x2", 4) => Self::LevelArrivalPower {
                level: int(1)? as usize,
                k: power(2)?,
                cutoff: real(3)?,
            },
            ("level_x3", 4) => Self::LevelServicePower {
                level: int(1)? as usize,
                k: power(2)?,
                cutoff: real(3)?,
            },
            _ => return Err(unknown()),
        };
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BarBatch {
    pub time: f64,
    pub generator: f64,
    pub arrival_jumps: f64,
    pub departure_jumps: f64,
}

/// Residual estimate with its component breakdown (each already divided by time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarResidual {
    pub function: TestFunction,
    pub residual: Estimate,
    pub generator: Estimate,
    pub arrival_term: Estimate,
    pub departure_term: Estimate,
    pub z_score: f64,
}

impl BarResidual {
    fn from_batches(function: TestFunction, batches: &[BarBatch]) -> Self {
        let time: f64 = batches.iter().map(|b| b.time).sum();
        let estimate = |part: fn(&BarBatch) -> f64| {
            let pooled = batches.iter().map(part).sum::<f64>() / time;
            let per: Vec<f64> = batches.iter().map(|b| part(b) / b.time).collect();
            Estimate::from_batches(pooled, &per)
        };
        let residual = estimate(|b| b.generator + b.arrival_jumps + b.departure_jumps);
        Self {
            function,
            z_score: residual.value / residual.std_error,
            residual,
            generator: estimate(|b| b.generator),
            arrival_term: estimate(|b| b.arrival_jumps),
            departure_term: estimate(|b| b.departure_jumps),
        }
    }

    pub fn within(&self, standard_errors: f64) -> bool {
        self.residual.value.abs() <= standard_errors * self.residual.std_error
    }
}

/// Accumulates residual components for several test functions.
#[derive(Debug, Clone)]
pub struct BarObserver {
    partition: LevelPartition,
    functions: Vec<TestFunction>,
    current: Vec<BarBatch>,
    batches: Vec<Vec<BarBatch>>,
}

impl BarObserver {
    pub fn new(partition: LevelPartition, functions: Vec<TestFunction>) -> Self {
        let current = vec![BarBatch::default(); functions.len()];
        Self {
            partition,
            batches: vec![Vec::new(); functions.len()],
            functions,
            current,
        }
    }

    /// Appends another replica's batches (same function list).
    pub fn absorb(&mut self, other: BarObserver) {
        for (mine, theirs) in self.batches.iter_mut().zip(other.batches) {
            mine.extend(theirs);
        }
    }

    pub fn finish(&self) -> Vec<BarResidual> {
        self.functions
            .iter()
            .zip(&self.batches)
            .map(|(f, b)| BarResidual::from_batches(*f, b))
            .collect()
    }
}

impl Observer for BarObserver {
    fn on_event(&mut self, r: &EventRecord) {
        for (f, acc) in self.functions.iter().zip(self.current.iter_mut()) {
            acc.time += r.dt;
            acc.generator += f.generator_integral(r, &self.partition);
            let jump = f.jump(r, &self.partition);
            match r.kind {
                EventKind::Arrival => acc.arrival_jumps += jump,
                EventKind::Departure => acc.departure_jumps += jump,
            }
        }
    }

    fn on_batch_end(&mut self) {
        for (acc, out) in self.current.iter_mut().zip(self.batches.iter_mut()) {
            out.push(std::mem::take(acc));
        }
    }
}

/// Runs `replicas` stationary replicas and returns one residual per function.
pub fn bar_residuals(
    cfg: &PrelimitConfig,
    settings: &RunSettings,
    replicas: u32,
    functions: &[TestFunction],
) -> Result<Vec<BarResidual>> {
    let parts: Vec<BarObserver> = (0..replicas.max(1))
        .into_par_iter()
        .map(|r| {
            let s = RunSettings {
                replica: settings.replica + r,
                ..*settings
            };
            let mut obs = BarObserver::new(cfg.partition().clone(), functions.to_vec());
            run_stationary_with(cfg, &s, &mut obs)?;
            Ok(obs)
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let mut merged = iter.next().expect("at least one replica");
    for p in iter {
        merged.absorb(p);
    }
    Ok(merged.finish())
}
