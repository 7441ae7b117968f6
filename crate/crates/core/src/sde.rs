//! Reflected Euler scheme for `dZ = b(Z) dt + σ(Z) dW + dY` on `[0, ∞)`.
//!
//! Reflection is by projection onto `[0, ∞)`. Coefficients are evaluated at
//! the left end of each step with a plain level lookup.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::distributions::{RngStream, StreamPurpose};
use crate::error::{Error, Result};
use crate::model::{HeavyTrafficModel, StepFunction};
use crate::stats::{EmpiricalDistribution, Estimate, LatticeAccumulator};

/// One projected Euler step: returns `(z', ΔY)`.
#[inline]
pub fn euler_reflect_step(z: f64, drift: f64, sigma: f64, dt: f64, g: f64) -> (f64, f64) {
    let p = z + drift * dt + sigma * dt.sqrt() * g;
    (p.max(0.0), (-p).max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    pub drift: StepFunction,
    /// Standard deviation `σ(x)` per level.
    pub sigma: StepFunction,
    pub dt: f64,
    /// Observation horizon (time units, excluding warm-up).
    pub horizon: f64,
    /// Discarded initial time; `None` means 10% of `horizon`.
    pub warmup: Option<f64>,
    pub z0: f64,
    pub batches: usize,
    /// ECDF bin width; atoms sit at bin centres.
    pub bin_width: f64,
    /// Abort when the fraction of time spent above `guard_level` exceeds
    /// `guard_fraction`.
    pub guard_level: f64,
    pub guard_fraction: f64,
}

impl DiffusionParams {
    /// Coefficients from the model; the guard sits where the limit tail
    /// mass is below `e^{-50}`.
    pub fn from_model(model: &HeavyTrafficModel, dt: f64, horizon: f64) -> Result<Self> {
        let drift = model.drift_step();
        let variance = model.variance_step();
        let sigma = StepFunction::new(
            variance.partition.clone(),
            variance.values.iter().map(|v| v.sqrt()).collect(),
        )?;
        let k = drift.values.len();
        let beta_k = 2.0 * drift.values[k - 1] / variance.values[k - 1];
        let top = drift.partition.lower(k);
        let params = Self {
            drift,
            sigma,
            dt,
            horizon,
            warmup: None,
            z0: 0.0,
            batches: 32,
            bin_width: 1e-3,
            guard_level: top + 50.0 / beta_k.abs(),
            guard_fraction: 1e-3,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step {} must be positive",
                self.dt
            )));
        }
        if self.sigma.values.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter(
                "σ(x) must be bounded away from zero".into(),
            ));
        }
        if !(self.horizon > 0.0) || self.warmup_time() < 0.0 {
            return Err(Error::RunLength(
                "horizon must be positive and warm-up nonnegative".into(),
            ));
        }
        if self.batches < 2 || self.steps_per_batch() == 0 {
            return Err(Error::RunLength(
                "horizon too short for the requested batches".into(),
            ));
        }
        if !(self.bin_width > 0.0) || !(self.z0 >= 0.0) {
            return Err(Error::InvalidParameter(
                "bin width must be positive and z0 nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn warmup_time(&self) -> f64 {
        self.warmup.unwrap_or(0.1 * self.horizon)
    }

    pub fn steps_per_batch(&self) -> u64 {
        (self.horizon / self.dt / self.batches as f64).round() as u64
    }

    #[inline]
    pub fn step(&self, z: f64, g: f64) -> (f64, f64) {
        let i = self.drift.partition.index_of(z);
        euler_reflect_step(z, self.drift.values[i], self.sigma.values[i], self.dt, g)
    }
}

/// Sampled states `Z_k` at `t_k = k Δt` and the cumulative regulator `Y_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPath {
    pub dt: f64,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    /// Whether the unreflected proposal was negative at each step.
    pub pushed: Vec<bool>,
}

pub fn simulate_path<R: RngCore + ?Sized>(
    params: &DiffusionParams,
    steps: usize,
    rng: &mut R,
) -> DiffusionPath {
    let mut z = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    let mut pushed = Vec::with_capacity(steps);
    let (mut zk, mut yk) = (params.z0, 0.0);
    z.push(zk);
    y.push(yk);
    for _ in 0..steps {
        let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        let (next, dy) = params.step(zk, g);
        zk = next;
        yk += dy;
        z.push(zk);
        y.push(yk);
        pushed.push(dy > 0.0);
    }
    DiffusionPath {
        dt: params.dt,
        z,
        y,
        pushed,
    }
}

/// Stationary estimates from the reflected scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeOutput {
    /// Time-average law of `Z`, binned.
    pub distribution: EmpiricalDistribution,
    /// Time-average of `Z` from unbinned values.
    pub mean: Estimate,
    pub reflection: f64,
    pub steps: u64,
    pub wall_time_s: f64,
}

/// Post-warm-up statistics of one chain.
struct Tally<'a> {
    params: &'a DiffusionParams,
    inv_bin: f64,
    acc: LatticeAccumulator,
    batch_means: Vec<f64>,
    sum: f64,
    total: f64,
    reflection: f64,
    above: u64,
    observed: u64,
}

impl<'a> Tally<'a> {
    fn new(params: &'a DiffusionParams) -> Self {
        Self {
            params,
            inv_bin: 1.0 / params.bin_width,
            acc: LatticeAccumulator::new(params.bin_width, 0.5),
            batch_means: Vec::with_capacity(params.batches),
            sum: 0.0,
            total: 0.0,
            reflection: 0.0,
            above: 0,
            observed: 0,
        }
    }

    #[inline]
    fn record(&mut self, z: f64, dy: f64) {
        self.acc.add((z * self.inv_bin) as usize, self.params.dt);
        self.sum += z;
        self.reflection += dy;
        self.above += u64::from(z > self.params.guard_level);
    }

    fn end_batch(&mut self, batch: usize) -> Result<()> {
        let per_batch = self.params.steps_per_batch();
        self.observed += per_batch;
        self.acc.end_batch();
        self.batch_means.push(self.sum / per_batch as f64);
        self.total += self.sum;
        self.sum = 0.0;
        let fraction = self.above as f64 / self.observed as f64;
        if fraction > self.params.guard_fraction {
            return Err(Error::Instability(format!(
                "Z spent {:.3}% of time above {} by batch {} (allowed {:.3}%)",
                100.0 * fraction,
                self.params.guard_level,
                batch + 1,
                100.0 * self.params.guard_fraction
            )));
        }
        Ok(())
    }

    fn finish(self, wall_time_s: f64) -> Result<SdeOutput> {
        Ok(SdeOutput {
            distribution: self.acc.finish()?,
            mean: Estimate::from_batches(self.total / self.observed as f64, &self.batch_means),
            reflection: self.reflection,
            steps: self.observed,
            wall_time_s,
        })
    }
}

/// Time-average law of `Z` after warm-up, with batch means over time.
pub fn run_sde_stationary(params: &DiffusionParams, rng: &mut RngStream) -> Result<SdeOutput> {
    use rand_distr::{Distribution, StandardNormal};
    params.validate()?;
    let start = std::time::Instant::now();
    let mut z = params.z0;
    let warmup_steps = (params.warmup_time() / params.dt).round() as u64;
    for _ in 0..warmup_steps {
        let g: f64 = StandardNormal.sample(rng);
        z = params.step(z, g).0;
    }
    let mut tally = Tally::new(params);
    for b in 0..params.batches {
        for _ in 0..params.steps_per_batch() {
            let g: f64 = StandardNormal.sample(rng);
            let (next, dy) = params.step(z, g);
            tally.record(z, dy);
            z = next;
        }
        tally.end_batch(b)?;
    }
    tally.finish(start.elapsed().as_secs_f64())
}

/// Runs the scheme at `params.dt` and at `params.dt / 2` on the same Brownian
/// path: each coarse increment is the sum of two fine ones. The difference
/// of the two outputs then reflects the step size rather than sampling noise.
pub fn run_sde_refined(
    params: &DiffusionParams,
    rng: &mut RngStream,
) -> Result<(SdeOutput, SdeOutput)> {
    use rand_distr::{Distribution, StandardNormal};
    params.validate()?;
    let fine = DiffusionParams {
        dt: 0.5 * params.dt,
        ..params.clone()
    };
    fine.validate()?;
    let start = std::time::Instant::now();
    let (mut zc, mut zf) = (params.z0, params.z0);
    let mut coarse_step =
        |zc: &mut f64, zf: &mut f64, tallies: Option<(&mut Tally, &mut Tally)>| {
            let g1: f64 = StandardNormal.sample(rng);
            let g2: f64 = StandardNormal.sample(rng);
            let (mid, dy1) = fine.step(*zf, g1);
            let (next_f, dy2) = fine.step(mid, g2);
            let (next_c, dyc) = params.step(*zc, (g1 + g2) * std::f64::consts::FRAC_1_SQRT_2);
            if let Some((tc, tf)) = tallies {
                tc.record(*zc, dyc);
                tf.record(*zf, dy1);
                tf.record(mid, dy2);
            }
            *zc = next_c;
            *zf = next_f;
        };
    let warmup_steps = (params.warmup_time() / params.dt).round() as u64;
    for _ in 0..warmup_steps {
        coarse_step(&mut zc, &mut zf, None);
    }
    let (mut tc, mut tf) = (Tally::new(params), Tally::new(&fine));
    for b in 0..params.batches {
        for _ in 0..params.steps_per_batch() {
            coarse_step(&mut zc, &mut zf, Some((&mut tc, &mut tf)));
        }
        tc.end_batch(b)?;
        tf.end_batch(b)?;
    }
    let wall = start.elapsed().as_secs_f64();
    Ok((tc.finish(wall)?, tf.finish(wall)?))
}

/// Stream for replica `replica` of diffusion group `group`.
pub fn diffusion_stream(seed: u64, group: u32, replica: u32) -> RngStream {
    RngStream::derive(seed, StreamPurpose::Diffusion, group, replica)
}
