use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::EventLog;
use super::{EventKind, EventRecord, Simulator};
use crate::distributions::{RngStream, StreamPurpose};
use crate::error::{Error, Result};
use crate::model::{LevelPartition, PrelimitConfig};
use crate::stats::{EmpiricalDistribution, Estimate, LatticeAccumulator};

/// Consumer of post-warm-up events.
///
/// Each record carries the interval preceding the event, so time integrals
/// can be accumulated exactly in `on_event`.
pub trait Observer {
    fn on_event(&mut self, record: &EventRecord);
    fn on_batch_end(&mut self) {}
}

impl Observer for () {
    fn on_event(&mut self, _: &EventRecord) {}
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn on_event(&mut self, record: &EventRecord) {
        (**self).on_event(record);
    }
    fn on_batch_end(&mut self) {
        (**self).on_batch_end();
    }
}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_event(&mut self, record: &EventRecord) {
        self.0.on_event(record);
        self.1.on_event(record);
    }
    fn on_batch_end(&mut self) {
        self.0.on_batch_end();
        self.1.on_batch_end();
    }
}

/// Run length and seeding for one replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    /// Total events including warm-up.
    pub events: u64,
    /// Discarded events; `None` means 10% of `events`.
    pub warmup: Option<u64>,
    pub batches: usize,
    pub seed: u64,
    /// Stream group, e.g. the index of `n` in a sweep.
    pub group: u32,
    pub replica: u32,
    /// Records kept in the event log from time zero; 0 disables the log.
    pub log_cap: usize,
}

impl RunSettings {
    pub fn new(events: u64, seed: u64) -> Self {
        Self {
            events,
            warmup: None,
            batches: 32,
            seed,
            group: 0,
            replica: 0,
            log_cap: 0,
        }
    }

    pub fn warmup_events(&self) -> u64 {
        self.warmup.unwrap_or(self.events / 10)
    }

    /// Events per batch after validating the run length.
    pub fn batch_length(&self) -> Result<u64> {
        let warmup = self.warmup_events();
        if warmup >= self.events {
            return Err(Error::RunLength(format!(
                "warm-up ({warmup}) must be shorter than the horizon ({})",
                self.events
            )));
        }
        if self.batches < 2 {
            return Err(Error::RunLength("at least two batches are required".into()));
        }
        let per_batch = (self.events - warmup) / self.batches as u64;
        if per_batch == 0 {
            return Err(Error::RunLength(format!(
                "{} post-warm-up events cannot fill {} batches",
                self.events - warmup,
                self.batches
            )));
        }
        Ok(per_batch)
    }

    pub fn streams(&self) -> (RngStream, RngStream) {
        (
            RngStream::derive(
                self.seed,
                StreamPurpose::ArrivalClock,
                self.group,
                self.replica,
            ),
            RngStream::derive(
                self.seed,
                StreamPurpose::ServiceClock,
                self.group,
                self.replica,
            ),
        )
    }
}

/// Raw per-batch totals from which rate estimates are formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchTotals {
    pub time: f64,
    pub arrivals: u64,
    pub departures: u64,
    /// `Σ R_d(0-)` over arrivals.
    pub service_residual_at_arrivals: f64,
    /// `Σ R_e(0)` over departures.
    pub arrival_residual_at_departures: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMass {
    pub level: usize,
    pub length: u64,
    /// `P_e[L(0-) = length]`.
    pub arrival: Estimate,
    /// `P_d[L(0) = length]`.
    pub departure: Estimate,
}

/// Event rates and Palm quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalmEstimates {
    pub alpha_e: Estimate,
    pub alpha_d: Estimate,
    /// `α_e - α_d` with the standard error of the per-batch differences.
    pub alpha_gap: Estimate,
    pub service_residual_at_arrivals: Estimate,
    pub arrival_residual_at_departures: Estimate,
    pub boundary: Vec<BoundaryMass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events: u64,
    pub warmup: u64,
    pub observed_events: u64,
    pub replicas: u32,
    pub wall_time_s: f64,
}

/// Stationary estimates from one or more replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOutput {
    pub n: u64,
    pub partition: LevelPartition,
    pub boundary_lengths: Vec<u64>,
    /// Time-weighted law of the unscaled queue length `L`.
    pub queue_length: EmpiricalDistribution,
    /// Law of `L(0-)` at arrivals.
    pub arrival_palm: EmpiricalDistribution,
    /// Law of `L(0)` at departures.
    pub departure_palm: EmpiricalDistribution,
    pub batches: Vec<BatchTotals>,
    pub summary: RunSummary,
    pub log: Option<EventLog>,
}

impl StationaryOutput {
    /// Law of `n^{-1/2} L`.
    pub fn scaled_queue_length(&self) -> EmpiricalDistribution {
        self.queue_length.rescaled(1.0 / (self.n as f64).sqrt())
    }

    /// `P(L ∈ S_i^(n))` for each level.
    pub fn level_masses(&self) -> Vec<Estimate> {
        (0..self.partition.level_count())
            .map(|i| self.queue_length.mass(|x| self.partition.index_of(x) == i))
            .collect()
    }

    /// `P(L = 0)`.
    pub fn empty_mass(&self) -> Estimate {
        self.queue_length.mass(|x| x == 0.0)
    }

    pub fn palm(&self) -> PalmEstimates {
        let time: f64 = self.batches.iter().map(|b| b.time).sum();
        let arrivals: u64 = self.batches.iter().map(|b| b.arrivals).sum();
        let departures: u64 = self.batches.iter().map(|b| b.departures).sum();
        let rate = |count: u64, t: f64| count as f64 / t;
        let per = |f: &dyn Fn(&BatchTotals) -> f64| self.batches.iter().map(f).collect::<Vec<_>>();
        let alpha_e =
            Estimate::from_batches(rate(arrivals, time), &per(&|b| rate(b.arrivals, b.time)));
        let alpha_d = Estimate::from_batches(
            rate(departures, time),
            &per(&|b| rate(b.departures, b.time)),
        );
        let alpha_gap = Estimate::from_batches(
            alpha_e.value - alpha_d.value,
            &per(&|b| (b.arrivals as f64 - b.departures as f64) / b.time),
        );
        let ratio = |num: f64, den: u64| if den == 0 { f64::NAN } else { num / den as f64 };
        let service_residual_at_arrivals = Estimate::from_batches(
            ratio(
                self.batches
                    .iter()
                    .map(|b| b.service_residual_at_arrivals)
                    .sum(),
                arrivals,
            ),
            &per(&|b| ratio(b.service_residual_at_arrivals, b.arrivals)),
        );
        let arrival_residual_at_departures = Estimate::from_batches(
            ratio(
                self.batches
                    .iter()
                    .map(|b| b.arrival_residual_at_departures)
                    .sum(),
                departures,
            ),
            &per(&|b| ratio(b.arrival_residual_at_departures, b.departures)),
        );
        let boundary = self
            .boundary_lengths
            .iter()
            .enumerate()
            .map(|(i, &length)| BoundaryMass {
                level: i + 1,
                length,
                arrival: self.arrival_palm.mass(|x| x == length as f64),
                departure: self.departure_palm.mass(|x| x == length as f64),
            })
            .collect();
        PalmEstimates {
            alpha_e,
            alpha_d,
            alpha_gap,
            service_residual_at_arrivals,
            arrival_residual_at_departures,
            boundary,
        }
    }

    /// Joins replicas; batches are concatenated in slice order, so callers
    /// that sort by replica index get bit-identical results regardless of
    /// completion order.
    pub fn merge(parts: &[StationaryOutput]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDistribution)?;
        if parts
            .iter()
            .any(|p| p.n != first.n || p.partition != first.partition)
        {
            return Err(Error::InvalidParameter(
                "cannot merge runs of different systems".into(),
            ));
        }
        let collect = |f: fn(&StationaryOutput) -> &EmpiricalDistribution| {
            EmpiricalDistribution::merge(&parts.iter().map(|p| f(p).clone()).collect::<Vec<_>>())
        };
        Ok(Self {
            n: first.n,
            partition: first.partition.clone(),
            boundary_lengths: first.boundary_lengths.clone(),
            queue_length: collect(|p| &p.queue_length)?,
            arrival_palm: collect(|p| &p.arrival_palm)?,
            departure_palm: collect(|p| &p.departure_palm)?,
            batches: parts
                .iter()
                .flat_map(|p| p.batches.iter().copied())
                .collect(),
            summary: RunSummary {
                events: parts.iter().map(|p| p.summary.events).sum(),
                warmup: parts.iter().map(|p| p.summary.warmup).sum(),
                observed_events: parts.iter().map(|p| p.summary.observed_events).sum(),
                replicas: parts.iter().map(|p| p.summary.replicas).sum(),
                wall_time_s: parts.iter().map(|p| p.summary.wall_time_s).sum(),
            },
            log: first.log.clone(),
        })
    }
}

struct StationaryObserver {
    queue: LatticeAccumulator,
    arrivals: LatticeAccumulator,
    departures: LatticeAccumulator,
    current: BatchTotals,
    batches: Vec<BatchTotals>,
}

impl StationaryObserver {
    fn new() -> Self {
        Self {
            queue: LatticeAccumulator::new(1.0, 0.0),
            arrivals: LatticeAccumulator::new(1.0, 0.0),
            departures: LatticeAccumulator::new(1.0, 0.0),
            current: BatchTotals::default(),
            batches: Vec::new(),
        }
    }
}

impl Observer for StationaryObserver {
    #[inline]
    fn on_event(&mut self, r: &EventRecord) {
        if r.dt > 0.0 {
            self.queue.add(r.len_before as usize, r.dt);
        }
        self.current.time += r.dt;
        match r.kind {
            EventKind::Arrival => {
                self.arrivals.add(r.len_before as usize, 1.0);
                self.current.arrivals += 1;
                self.current.service_residual_at_arrivals += r.rd_before;
            }
            EventKind::Departure => {
                self.departures.add(r.len_after as usize, 1.0);
                self.current.departures += 1;
                self.current.arrival_residual_at_departures += r.re_after;
            }
        }
    }

    fn on_batch_end(&mut self) {
        self.queue.end_batch();
        self.arrivals.end_batch();
        self.departures.end_batch();
        self.batches.push(std::mem::take(&mut self.current));
    }
}

/// Single replica with the standard estimators only.
pub fn run_stationary(cfg: &PrelimitConfig, settings: &RunSettings) -> Result<StationaryOutput> {
    run_stationary_with(cfg, settings, &mut ())
}

/// Single replica; `extra` sees the same post-warm-up events and batch ends.
pub fn run_stationary_with<O: Observer>(
    cfg: &PrelimitConfig,
    settings: &RunSettings,
    extra: &mut O,
) -> Result<StationaryOutput> {
    let start = Instant::now();
    let per_batch = settings.batch_length()?;
    let warmup = settings.warmup_events();
    let (arrival_rng, service_rng) = settings.streams();
    let mut sim = Simulator::new(cfg, arrival_rng, service_rng);
    let mut log =
        (settings.log_cap > 0).then(|| EventLog::new(sim.state(), settings, settings.log_cap));

    for _ in 0..warmup {
        let r = sim.step()?;
        if let Some(log) = log.as_mut() {
            log.push(r);
        }
    }
    let mut observer = StationaryObserver::new();
    for _ in 0..settings.batches {
        for _ in 0..per_batch {
            let r = sim.step()?;
            observer.on_event(&r);
            extra.on_event(&r);
            if let Some(log) = log.as_mut() {
                log.push(r);
            }
        }
        observer.on_batch_end();
        extra.on_batch_end();
    }

    let observed = per_batch * settings.batches as u64;
    Ok(StationaryOutput {
        n: cfg.n(),
        partition: cfg.partition().clone(),
        boundary_lengths: cfg.boundary_lengths(),
        queue_length: observer.queue.finish()?,
        arrival_palm: observer.arrivals.finish()?,
        departure_palm: observer.departures.finish()?,
        batches: observer.batches,
        summary: RunSummary {
            events: warmup + observed,
            warmup,
            observed_events: observed,
            replicas: 1,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
        log,
    })
}

/// Runs `replicas` independent copies in parallel and merges them in
/// replica-index order.
pub fn run_replicas(
    cfg: &PrelimitConfig,
    settings: &RunSettings,
    replicas: u32,
) -> Result<StationaryOutput> {
    if replicas == 0 {
        return Err(Error::InvalidParameter(
            "replica count must be positive".into(),
        ));
    }
    let parts: Vec<StationaryOutput> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = RunSettings {
                replica: settings.replica + r,
                ..*settings
            };
            run_stationary(cfg, &s)
        })
        .collect::<Result<_>>()?;
    StationaryOutput::merge(&parts)
}
