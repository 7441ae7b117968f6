//! Heavy-traffic parameterization, level partitions and the indexed
//! pre-limit configurations.
//!
//! The `n`-th system scales thresholds as `l_i n^{1/2}` and perturbs the
//! base rates by `n^{-1/2}`; the slack terms allowed asymptotically are set
//! to exactly zero, so `(λ_i^(n) - μ_i^(n)) n^{1/2} = b_i` holds for every `n`.

use serde::{Deserialize, Serialize};

use crate::distributions::RenewalSpec;
use crate::error::{Error, Result};

/// Partition of `[0, ∞)` into `S_1 = [0, l_1]`, `S_i = (l_{i-1}, l_i]`,
/// `S_K = (l_{K-1}, ∞)`.
///
/// Membership uses exact `<=` comparisons, so a boundary value `l_i`
/// belongs to `S_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPartition {
    boundaries: Vec<f64>,
}

impl LevelPartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one level boundary is required (K >= 2)".into(),
            ));
        }
        let mut prev = 0.0;
        for (i, &l) in boundaries.iter().enumerate() {
            if !(l.is_finite() && l > prev) {
                return Err(Error::InvalidParameter(format!(
                    "level boundaries must satisfy 0 < l_1 < ... < l_(K-1); l_{} = {l}",
                    i + 1
                )));
            }
            prev = l;
        }
        Ok(Self { boundaries })
    }

    /// Number of levels `K`.
    pub fn level_count(&self) -> usize {
        self.boundaries.len() + 1
    }

    /// `l_1, ..., l_{K-1}`.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// `l_{i}` for `i in 0..K` with `l_0 = 0`.
    pub fn lower(&self, level: usize) -> f64 {
        if level <= 1 {
            0.0
        } else {
            self.boundaries[level - 2]
        }
    }

    /// Upper edge of `S_level` (`+∞` for the top level).
    pub fn upper(&self, level: usize) -> f64 {
        self.boundaries
            .get(level - 1)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// 1-based level `i` with `x ∈ S_i`.
    pub fn level_of(&self, x: f64) -> Result<usize> {
        if x < 0.0 || x.is_nan() {
            return Err(Error::NegativeState(x));
        }
        Ok(self.index_of(x) + 1)
    }

    /// 0-based level index; callers guarantee `x >= 0`.
    #[inline]
    pub fn index_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&l| l < x)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            boundaries: self.boundaries.iter().map(|l| l * factor).collect(),
        }
    }
}

/// A step function constant on each level set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub partition: LevelPartition,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn new(partition: LevelPartition, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.level_count() {
            return Err(Error::InvalidParameter(format!(
                "step function needs {} values, got {}",
                partition.level_count(),
                values.len()
            )));
        }
        Ok(Self { partition, values })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.values[self.partition.index_of(x)]
    }
}

/// Heavy-traffic limit primitives: thresholds `l_i`, common base rates
/// `λ_i = μ_i` and the first-order rate perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct HeavyTrafficParams {
    partition: LevelPartition,
    base_rates: Vec<f64>,
    arrival_perturbation: Vec<f64>,
    service_perturbation: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    levels: Vec<f64>,
    base_rates: Vec<f64>,
    arrival_perturbation: Vec<f64>,
    service_perturbation: Vec<f64>,
}

impl TryFrom<RawParams> for HeavyTrafficParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        Self::new(
            raw.levels,
            raw.base_rates,
            raw.arrival_perturbation,
            raw.service_perturbation,
        )
    }
}

impl From<HeavyTrafficParams> for RawParams {
    fn from(p: HeavyTrafficParams) -> Self {
        Self {
            levels: p.partition.boundaries,
            base_rates: p.base_rates,
            arrival_perturbation: p.arrival_perturbation,
            service_perturbation: p.service_perturbation,
        }
    }
}

impl HeavyTrafficParams {
    pub fn new(
        levels: Vec<f64>,
        base_rates: Vec<f64>,
        arrival_perturbation: Vec<f64>,
        service_perturbation: Vec<f64>,
    ) -> Result<Self> {
        let partition = LevelPartition::new(levels)?;
        let k = partition.level_count();
        for (name, v) in [
            ("base_rates", &base_rates),
            ("arrival_perturbation", &arrival_perturbation),
            ("service_perturbation", &service_perturbation),
        ] {
            if v.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "{name} needs {k} entries, got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if let Some(i) = base_rates.iter().position(|&r| r <= 0.0) {
            return Err(Error::NonpositiveRate {
                name: "lambda",
                level: i + 1,
                value: base_rates[i],
            });
        }
        let params = Self {
            partition,
            base_rates,
            arrival_perturbation,
            service_perturbation,
        };
        let top = params.drift(k);
        if !(top < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "top-level drift b_K = {top} must be negative"
            )));
        }
        Ok(params)
    }

    /// Parameters where all drift comes from the service side:
    /// `λ̂_i = 0`, `μ̂_i = -b_i`.
    pub fn from_drifts(levels: Vec<f64>, base_rates: Vec<f64>, drifts: &[f64]) -> Result<Self> {
        let k = drifts.len();
        Self::new(
            levels,
            base_rates,
            vec![0.0; k],
            drifts.iter().map(|b| -b).collect(),
        )
    }

    pub fn level_count(&self) -> usize {
        self.partition.level_count()
    }

    pub fn partition(&self) -> &LevelPartition {
        &self.partition
    }

    pub fn base_rates(&self) -> &[f64] {
        &self.base_rates
    }

    pub fn arrival_perturbation(&self) -> &[f64] {
        &self.arrival_perturbation
    }

    pub fn service_perturbation(&self) -> &[f64] {
        &self.service_perturbation
    }

    /// `b_i = λ̂_i - μ̂_i` for 1-based `level`.
    pub fn drift(&self, level: usize) -> f64 {
        self.arrival_perturbation[level - 1] - self.service_perturbation[level - 1]
    }

    pub fn drifts(&self) -> Vec<f64> {
        (1..=self.level_count()).map(|i| self.drift(i)).collect()
    }
}

/// Heavy-traffic parameters together with the two renewal laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTrafficModel {
    pub params: HeavyTrafficParams,
    pub arrival: RenewalSpec,
    pub service: RenewalSpec,
}

impl HeavyTrafficModel {
    pub fn new(
        params: HeavyTrafficParams,
        arrival: RenewalSpec,
        service: RenewalSpec,
    ) -> Result<Self> {
        let arrival = arrival.validated()?;
        let service = service.validated()?;
        if !(arrival.variance() + service.variance() > 0.0) {
            return Err(Error::InvalidParameter(
                "at least one of the arrival and service variances must be positive".into(),
            ));
        }
        Ok(Self {
            params,
            arrival,
            service,
        })
    }

    pub fn level_count(&self) -> usize {
        self.params.level_count()
    }

    /// `σ_i² = λ_i σ_A² + μ_i σ_S²` (with `λ_i = μ_i`).
    pub fn variances(&self) -> Vec<f64> {
        let (va, vs) = (self.arrival.variance(), self.service.variance());
        self.params
            .base_rates
            .iter()
            .map(|r| r * va + r * vs)
            .collect()
    }

    /// `b(x)`.
    pub fn drift_fn(&self, x: f64) -> Result<f64> {
        let level = self.params.partition.level_of(x)?;
        Ok(self.params.drift(level))
    }

    /// `σ²(x)`.
    pub fn variance_fn(&self, x: f64) -> Result<f64> {
        let level = self.params.partition.level_of(x)?;
        Ok(self.variances()[level - 1])
    }

    pub fn drift_step(&self) -> StepFunction {
        StepFunction {
            partition: self.params.partition.clone(),
            values: self.params.drifts(),
        }
    }

    pub fn variance_step(&self) -> StepFunction {
        StepFunction {
            partition: self.params.partition.clone(),
            values: self.variances(),
        }
    }

    /// Instantiates the `n`-th system with zero slack terms.
    pub fn build_prelimit(&self, n: u64) -> Result<PrelimitConfig> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "scaling index n must be >= 1".into(),
            ));
        }
        let root = (n as f64).sqrt();
        let p = &self.params;
        let arrival_rates = p
            .base_rates
            .iter()
            .zip(&p.arrival_perturbation)
            .map(|(l, h)| l + h / root)
            .collect();
        let service_rates = p
            .base_rates
            .iter()
            .zip(&p.service_perturbation)
            .map(|(m, h)| m + h / root)
            .collect();
        let levels = p.partition.boundaries.iter().map(|l| l * root).collect();
        PrelimitConfig::new(
            n,
            levels,
            arrival_rates,
            service_rates,
            self.arrival,
            self.service,
        )
    }
}

/// Modeling primitives of the `n`-th system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrelimitConfig {
    n: u64,
    partition: LevelPartition,
    arrival_rates: Vec<f64>,
    service_rates: Vec<f64>,
    arrival: RenewalSpec,
    service: RenewalSpec,
}

impl PrelimitConfig {
    /// Validates positivity of every rate, unit level spacing and `ρ_K < 1`.
    pub fn new(
        n: u64,
        levels: Vec<f64>,
        arrival_rates: Vec<f64>,
        service_rates: Vec<f64>,
        arrival: RenewalSpec,
        service: RenewalSpec,
    ) -> Result<Self> {
        let mut prev = 0.0;
        for (i, &l) in levels.iter().enumerate() {
            if !(l - prev >= 1.0) {
                return Err(Error::LevelSpacing {
                    level: i + 1,
                    gap: l - prev,
                });
            }
            prev = l;
        }
        let partition = LevelPartition::new(levels)?;
        let k = partition.level_count();
        if arrival_rates.len() != k || service_rates.len() != k {
            return Err(Error::InvalidParameter(format!(
                "rate vectors need {k} entries"
            )));
        }
        for (name, rates) in [("lambda", &arrival_rates), ("mu", &service_rates)] {
            if let Some(i) = rates.iter().position(|&r| !(r > 0.0)) {
                return Err(Error::NonpositiveRate {
                    name,
                    level: i + 1,
                    value: rates[i],
                });
            }
        }
        let rho = arrival_rates[k - 1] / service_rates[k - 1];
        if !(rho < 1.0) {
            return Err(Error::Unstable { rho });
        }
        Ok(Self {
            n,
            partition,
            arrival_rates,
            service_rates,
            arrival: arrival.validated()?,
            service: service.validated()?,
        })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `n^{-1/2}`, the queue-length scale.
    pub fn scale(&self) -> f64 {
        1.0 / (self.n as f64).sqrt()
    }

    pub fn partition(&self) -> &LevelPartition {
        &self.partition
    }

    pub fn level_count(&self) -> usize {
        self.partition.level_count()
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival_rates
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.service_rates
    }

    pub fn arrival_spec(&self) -> &RenewalSpec {
        &self.arrival
    }

    pub fn service_spec(&self) -> &RenewalSpec {
        &self.service
    }

    /// `ρ_i^(n)` for 1-based `level`.
    pub fn rho(&self, level: usize) -> f64 {
        self.arrival_rates[level - 1] / self.service_rates[level - 1]
    }

    /// Arrival clock speed at queue length `len`; `λ_0 = λ_1` since `0 ∈ S_1`.
    #[inline]
    pub fn arrival_rate_at(&self, len: u64) -> f64 {
        self.arrival_rates[self.partition.index_of(len as f64)]
    }

    /// Service clock speed at queue length `len`; frozen (zero) when empty.
    #[inline]
    pub fn service_rate_at(&self, len: u64) -> f64 {
        if len == 0 {
            0.0
        } else {
            self.service_rates[self.partition.index_of(len as f64)]
        }
    }

    pub fn min_arrival_rate(&self) -> f64 {
        self.arrival_rates
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_service_rate(&self) -> f64 {
        self.service_rates
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_service_rate(&self) -> f64 {
        self.service_rates.iter().copied().fold(0.0, f64::max)
    }

    /// Largest integer queue length in each bounded level, `floor(l_i^(n))`.
    pub fn boundary_lengths(&self) -> Vec<u64> {
        self.partition
            .boundaries()
            .iter()
            .map(|l| l.floor() as u64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level(l1: f64) -> LevelPartition {
        LevelPartition::new(vec![l1]).unwrap()
    }

    #[test]
    fn level_lookup_examples() {
        let p = two_level(5.0);
        assert_eq!(p.level_of(0.0).unwrap(), 1);
        assert_eq!(p.level_of(5.0).unwrap(), 1);
        assert_eq!(p.level_of(5.0001).unwrap(), 2);
        assert!(matches!(p.level_of(-1e-9), Err(Error::NegativeState(_))));
    }

    #[test]
    fn boundaries_belong_to_lower_level() {
        let p = LevelPartition::new(vec![1.0, 2.5, 4.0]).unwrap();
        assert_eq!(p.level_of(1.0).unwrap(), 1);
        assert_eq!(p.level_of(2.5).unwrap(), 2);
        assert_eq!(p.level_of(4.0).unwrap(), 3);
        assert_eq!(p.level_of(4.0 + f64::EPSILON * 4.0).unwrap(), 4);
        assert_eq!(p.level_of(1e300).unwrap(), 4);
    }

    #[test]
    fn partition_rejects_bad_boundaries() {
        assert!(LevelPartition::new(vec![]).is_err());
        assert!(LevelPartition::new(vec![0.0]).is_err());
        assert!(LevelPartition::new(vec![2.0, 2.0]).is_err());
    }

    fn example_params() -> HeavyTrafficParams {
        HeavyTrafficParams::new(vec![1.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn build_prelimit_arithmetic() {
        let model = HeavyTrafficModel::new(
            example_params(),
            RenewalSpec::Exponential,
            RenewalSpec::Exponential,
        )
        .unwrap();
        let cfg = model.build_prelimit(100).unwrap();
        assert!((cfg.service_rates()[0] - 1.1).abs() < 1e-15);
        assert!((cfg.partition().boundaries()[0] - 10.0).abs() < 1e-15);
    }

    #[test]
    fn build_prelimit_spacing_violation() {
        let params =
            HeavyTrafficParams::from_drifts(vec![0.5], vec![1.0, 1.0], &[0.0, -1.0]).unwrap();
        let model =
            HeavyTrafficModel::new(params, RenewalSpec::Exponential, RenewalSpec::Exponential)
                .unwrap();
        assert!(matches!(
            model.build_prelimit(1),
            Err(Error::LevelSpacing { .. })
        ));
        assert!(model.build_prelimit(4).is_ok());
    }

    #[test]
    fn positive_top_drift_rejected() {
        let err = HeavyTrafficParams::from_drifts(vec![1.0], vec![1.0, 1.0], &[0.0, 1.0]);
        assert!(err.is_err());
    }

    #[test]
    fn nonpositive_prelimit_rate_rejected() {
        // μ̂_1 = -20 drives μ_1^(n) below zero for small n.
        let params =
            HeavyTrafficParams::new(vec![1.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![-20.0, 1.0])
                .unwrap();
        let model =
            HeavyTrafficModel::new(params, RenewalSpec::Exponential, RenewalSpec::Exponential)
                .unwrap();
        assert!(matches!(
            model.build_prelimit(4),
            Err(Error::NonpositiveRate { .. })
        ));
    }

    #[test]
    fn instability_rejected() {
        let err = PrelimitConfig::new(
            1,
            vec![2.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            RenewalSpec::Exponential,
            RenewalSpec::Exponential,
        );
        assert!(matches!(err, Err(Error::Unstable { .. })));
    }

    #[test]
    fn drift_and_variance_step_functions() {
        let params =
            HeavyTrafficParams::from_drifts(vec![1.0], vec![1.0, 1.0], &[0.0, -1.0]).unwrap();
        let model =
            HeavyTrafficModel::new(params, RenewalSpec::Exponential, RenewalSpec::Exponential)
                .unwrap();
        assert_eq!(model.drift_fn(0.5).unwrap(), 0.0);
        assert_eq!(model.drift_fn(1.0).unwrap(), 0.0);
        assert_eq!(model.drift_fn(1.5).unwrap(), -1.0);
        for x in [0.0, 0.3, 1.0, 7.0] {
            assert_eq!(model.variance_fn(x).unwrap(), 2.0);
        }
    }

    #[test]
    fn zero_total_variance_rejected() {
        let err = HeavyTrafficModel::new(
            example_params(),
            RenewalSpec::Deterministic,
            RenewalSpec::Deterministic,
        );
        assert!(err.is_err());
    }

    #[test]
    fn empty_system_freezes_service_only() {
        let model = HeavyTrafficModel::new(
            example_params(),
            RenewalSpec::Exponential,
            RenewalSpec::Exponential,
        )
        .unwrap();
        let cfg = model.build_prelimit(100).unwrap();
        assert_eq!(cfg.service_rate_at(0), 0.0);
        assert_eq!(cfg.arrival_rate_at(0), cfg.arrival_rates()[0]);
        assert_eq!(cfg.service_rate_at(1), cfg.service_rates()[0]);
        assert_eq!(cfg.service_rate_at(11), cfg.service_rates()[1]);
    }
}
