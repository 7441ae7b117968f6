//! Batch-means estimates and weighted empirical distributions.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Point estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub batches: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            batches: 0,
        }
    }

    /// Pooled point estimate with the standard error of the batch values.
    pub fn from_batches(pooled: f64, batch_values: &[f64]) -> Self {
        let b = batch_values.len();
        if b < 2 {
            return Self {
                value: pooled,
                std_error: f64::NAN,
                batches: b,
            };
        }
        let mean = batch_values.iter().sum::<f64>() / b as f64;
        let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
        Self {
            value: pooled,
            std_error: (var / b as f64).sqrt(),
            batches: b,
        }
    }

    /// Two-sided Student-t half-width with `batches - 1` degrees of freedom.
    pub fn ci_half_width(&self, confidence: f64) -> f64 {
        t_quantile(confidence, self.batches.saturating_sub(1)) * self.std_error
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            std_error: self.std_error * factor.abs(),
            batches: self.batches,
        }
    }
}

/// Two-sided quantile `t_{(1+confidence)/2, dof}`; normal quantile for huge dof.
pub fn t_quantile(confidence: f64, dof: usize) -> f64 {
    let p = 0.5 * (1.0 + confidence);
    if dof == 0 {
        return f64::INFINITY;
    }
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    dist.inverse_cdf(p)
}

/// Weighted atoms on `[0, ∞)` split into batches.
///
/// Weights are time weights (time-stationary laws), event counts (Palm laws)
/// or unit weights (i.i.d. samples). They are normalized on query.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    support: Vec<f64>,
    batch_weights: Vec<Vec<f64>>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EmpiricalDistribution {
    /// `support` must be strictly increasing; each batch aligns with it.
    pub fn new(support: Vec<f64>, batch_weights: Vec<Vec<f64>>) -> Result<Self> {
        if support.is_empty() || batch_weights.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "support must be strictly increasing".into(),
            ));
        }
        if batch_weights.iter().any(|b| b.len() != support.len()) {
            return Err(Error::InvalidParameter(
                "batch weights must align with the support".into(),
            ));
        }
        if batch_weights.iter().flatten().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "weights must be nonnegative".into(),
            ));
        }
        let mut weights = vec![0.0; support.len()];
        for batch in &batch_weights {
            for (acc, w) in weights.iter_mut().zip(batch) {
                *acc += w;
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        let mut running = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                running += w;
                running / total
            })
            .collect();
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(Self {
            support,
            batch_weights,
            weights,
            cumulative,
        })
    }

    /// Single-batch distribution from i.i.d. samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut support = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for x in sorted {
            if support.last() == Some(&x) {
                *weights.last_mut().expect("aligned") += 1.0;
            } else {
                support.push(x);
                weights.push(1.0);
            }
        }
        Self::new(support, vec![weights])
    }

    /// Merges replicas; batches are concatenated in argument order.
    pub fn merge(parts: &[EmpiricalDistribution]) -> Result<Self> {
        let mut support: Vec<f64> = parts
            .iter()
            .flat_map(|p| p.support.iter().copied())
            .collect();
        support.sort_by(f64::total_cmp);
        support.dedup();
        let mut batches = Vec::new();
        for part in parts {
            for batch in &part.batch_weights {
                let mut aligned = vec![0.0; support.len()];
                let mut j = 0;
                for (x, w) in part.support.iter().zip(batch) {
                    while support[j] < *x {
                        j += 1;
                    }
                    aligned[j] = *w;
                }
                batches.push(aligned);
            }
        }
        Self::new(support, batches)
    }

    /// Same weights on the support multiplied by `factor > 0`.
    pub fn rescaled(&self, factor: f64) -> Self {
        Self {
            support: self.support.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn batch_count(&self) -> usize {
        self.batch_weights.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Normalized cumulative mass at each support point.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Right-continuous ECDF.
    pub fn cdf(&self, x: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= x);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Estimate of any statistic computable from `(support, weights)`; the
    /// point value uses pooled weights, the error the per-batch values.
    pub fn batch_statistic<F: Fn(&[f64], &[f64]) -> f64>(&self, stat: F) -> Estimate {
        let pooled = stat(&self.support, &self.weights);
        let per_batch: Vec<f64> = self
            .batch_weights
            .iter()
            .filter(|b| b.iter().sum::<f64>() > 0.0)
            .map(|b| stat(&self.support, b))
            .collect();
        Estimate::from_batches(pooled, &per_batch)
    }

    /// Probability of `{x : pred(x)}`.
    pub fn mass<P: Fn(f64) -> bool>(&self, pred: P) -> Estimate {
        self.batch_statistic(|support, weights| {
            let total: f64 = weights.iter().sum();
            support
                .iter()
                .zip(weights)
                .filter(|(x, _)| pred(**x))
                .map(|(_, w)| w)
                .sum::<f64>()
                / total
        })
    }

    pub fn moment(&self, k: i32) -> Estimate {
        self.batch_statistic(|support, weights| {
            let total: f64 = weights.iter().sum();
            support
                .iter()
                .zip(weights)
                .map(|(x, w)| x.powi(k) * w)
                .sum::<f64>()
                / total
        })
    }

    pub fn mean(&self) -> Estimate {
        self.moment(1)
    }

    /// `(x, F(x), CI half-width)` at every support point.
    pub fn ecdf_with_ci(&self, confidence: f64) -> Vec<(f64, f64, f64)> {
        let live: Vec<&Vec<f64>> = self
            .batch_weights
            .iter()
            .filter(|b| b.iter().sum::<f64>() > 0.0)
            .collect();
        let b = live.len();
        let t = t_quantile(confidence, b.saturating_sub(1));
        let mut running = vec![0.0; b];
        let totals: Vec<f64> = live.iter().map(|w| w.iter().sum()).collect();
        let mut out = Vec::with_capacity(self.support.len());
        for (j, &x) in self.support.iter().enumerate() {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for (r, batch) in live.iter().enumerate() {
                running[r] += batch[j];
                let f = running[r] / totals[r];
                sum += f;
                sum_sq += f * f;
            }
            let half = if b >= 2 {
                let mean = sum / b as f64;
                let var = ((sum_sq - b as f64 * mean * mean) / (b - 1) as f64).max(0.0);
                t * (var / b as f64).sqrt()
            } else {
                f64::NAN
            };
            out.push((x, self.cumulative[j], half));
        }
        out
    }
}

/// Accumulates weights on the lattice `x = (key + offset) * scale`.
#[derive(Debug, Clone)]
pub struct LatticeAccumulator {
    scale: f64,
    offset: f64,
    batches: Vec<Vec<f64>>,
    current: Vec<f64>,
}

impl LatticeAccumulator {
    pub fn new(scale: f64, offset: f64) -> Self {
        Self {
            scale,
            offset,
            batches: Vec::new(),
            current: Vec::new(),
        }
    }

    #[inline]
    pub fn add(&mut self, key: usize, weight: f64) {
        if key >= self.current.len() {
            self.current.resize(key + 1, 0.0);
        }
        self.current[key] += weight;
    }

    pub fn end_batch(&mut self) {
        self.batches.push(std::mem::take(&mut self.current));
    }

    pub fn finish(mut self) -> Result<EmpiricalDistribution> {
        if !self.current.is_empty() {
            self.end_batch();
        }
        let width = self.batches.iter().map(Vec::len).max().unwrap_or(0);
        let keys: Vec<usize> = (0..width)
            .filter(|&k| {
                self.batches
                    .iter()
                    .any(|b| b.get(k).is_some_and(|w| *w > 0.0))
            })
            .collect();
        let support = keys
            .iter()
            .map(|&k| (k as f64 + self.offset) * self.scale)
            .collect();
        let batches = self
            .batches
            .iter()
            .map(|b| {
                keys.iter()
                    .map(|&k| b.get(k).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        EmpiricalDistribution::new(support, batches)
    }
}
