//! Event-driven simulation of the pre-limit Markov process `(L, R_e, R_d)`.
//!
//! Between events the level, and hence both clock speeds, are constant, so
//! each step is exact: the residuals drain linearly and the earlier clock
//! fires. Simultaneous expiries are split into an arrival followed by a
//! zero-length departure step.

mod log;
mod run;

pub use log::{validate_trajectory, EventLog, ValidationReport};
pub use run::{
    run_replicas, run_stationary, run_stationary_with, BatchTotals, BoundaryMass, Observer,
    PalmEstimates, RunSettings, RunSummary, StationaryOutput,
};

use serde::{Deserialize, Serialize};

use crate::distributions::RngStream;
use crate::error::{Error, Result};
use crate::model::PrelimitConfig;

/// Markov state `X = (L, R_e, R_d)` and the simulation clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    pub len: u64,
    pub residual_arrival: f64,
    pub residual_service: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Departure,
}

/// One event together with the interval that precedes it.
///
/// `*_start` are the residuals at the start of the interval, `*_before` just
/// before the jump and `*_after` just after. During the interval the clocks
/// drain at `arrival_rate` and `service_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: u64,
    pub time: f64,
    pub dt: f64,
    pub kind: EventKind,
    pub arrival_rate: f64,
    pub service_rate: f64,
    pub len_before: u64,
    pub len_after: u64,
    pub re_start: f64,
    pub rd_start: f64,
    pub re_before: f64,
    pub rd_before: f64,
    pub re_after: f64,
    pub rd_after: f64,
}

/// Exact simulator for one pre-limit system.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    cfg: &'a PrelimitConfig,
    state: QueueState,
    arrival_rng: RngStream,
    service_rng: RngStream,
    pending_departure: bool,
    events: u64,
}

impl<'a> Simulator<'a> {
    /// Starts empty with fresh draws for both residuals.
    pub fn new(
        cfg: &'a PrelimitConfig,
        mut arrival_rng: RngStream,
        mut service_rng: RngStream,
    ) -> Self {
        let state = QueueState {
            len: 0,
            residual_arrival: cfg.arrival_spec().sample(&mut arrival_rng),
            residual_service: cfg.service_spec().sample(&mut service_rng),
            time: 0.0,
        };
        Self::from_state(cfg, state, arrival_rng, service_rng)
    }

    pub fn from_state(
        cfg: &'a PrelimitConfig,
        state: QueueState,
        arrival_rng: RngStream,
        service_rng: RngStream,
    ) -> Self {
        Self {
            cfg,
            state,
            arrival_rng,
            service_rng,
            pending_departure: false,
            events: 0,
        }
    }

    pub fn state(&self) -> QueueState {
        self.state
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Advances to the next event.
    pub fn step(&mut self) -> Result<EventRecord> {
        let cfg = self.cfg;
        let st = self.state;
        let a = cfg.arrival_rate_at(st.len);
        let s = cfg.service_rate_at(st.len);

        if self.pending_departure {
            self.pending_departure = false;
            return self.depart(st, 0.0, a, s, st.residual_arrival, 0.0);
        }

        if !(st.residual_arrival > 0.0) || !(st.residual_service > 0.0) {
            return Err(Error::Corrupted {
                event: self.events,
                detail: format!(
                    "nonpositive residual (R_e = {}, R_d = {})",
                    st.residual_arrival, st.residual_service
                ),
            });
        }

        let to_arrival = st.residual_arrival / a;
        let to_departure = if s > 0.0 {
            st.residual_service / s
        } else {
            f64::INFINITY
        };
        let dt = to_arrival.min(to_departure);
        let re = st.residual_arrival - a * dt;
        let rd = if s > 0.0 {
            st.residual_service - s * dt
        } else {
            st.residual_service
        };
        let arrival_fires = to_arrival == dt || re <= 0.0;
        let departure_fires = s > 0.0 && (to_departure == dt || rd <= 0.0);

        if arrival_fires {
            let draw = cfg.arrival_spec().sample(&mut self.arrival_rng);
            let rd_now = if departure_fires { 0.0 } else { rd };
            self.pending_departure = departure_fires;
            let record = EventRecord {
                index: self.events,
                time: st.time + dt,
                dt,
                kind: EventKind::Arrival,
                arrival_rate: a,
                service_rate: s,
                len_before: st.len,
                len_after: st.len + 1,
                re_start: st.residual_arrival,
                rd_start: st.residual_service,
                re_before: 0.0,
                rd_before: rd_now,
                re_after: draw,
                rd_after: rd_now,
            };
            self.state = QueueState {
                len: st.len + 1,
                residual_arrival: draw,
                residual_service: rd_now,
                time: record.time,
            };
            self.events += 1;
            return Ok(record);
        }
        if departure_fires {
            return self.depart(st, dt, a, s, re, st.residual_service);
        }
        Err(Error::Corrupted {
            event: self.events,
            detail: format!("no clock fired after dt = {dt}"),
        })
    }

    fn depart(
        &mut self,
        st: QueueState,
        dt: f64,
        a: f64,
        s: f64,
        re: f64,
        rd_start: f64,
    ) -> Result<EventRecord> {
        if st.len == 0 {
            return Err(Error::Corrupted {
                event: self.events,
                detail: "departure from an empty system".into(),
            });
        }
        let draw = self.cfg.service_spec().sample(&mut self.service_rng);
        let record = EventRecord {
            index: self.events,
            time: st.time + dt,
            dt,
            kind: EventKind::Departure,
            arrival_rate: a,
            service_rate: s,
            len_before: st.len,
            len_after: st.len - 1,
            re_start: st.residual_arrival,
            rd_start,
            re_before: re,
            rd_before: 0.0,
            re_after: re,
            rd_after: draw,
        };
        self.state = QueueState {
            len: st.len - 1,
            residual_arrival: re,
            residual_service: draw,
            time: record.time,
        };
        self.events += 1;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{RenewalSpec, StreamPurpose};

    fn cfg(spec: RenewalSpec, levels: Vec<f64>, lam: Vec<f64>, mu: Vec<f64>) -> PrelimitConfig {
        PrelimitConfig::new(1, levels, lam, mu, spec, spec).unwrap()
    }

    fn streams() -> (RngStream, RngStream) {
        (
            RngStream::derive(1, StreamPurpose::ArrivalClock, 0, 0),
            RngStream::derive(1, StreamPurpose::ServiceClock, 0, 0),
        )
    }

    #[test]
    fn empty_system_waits_for_arrival() {
        let c = cfg(
            RenewalSpec::Exponential,
            vec![5.0],
            vec![1.0, 1.0],
            vec![1.2, 1.2],
        );
        let (a, s) = streams();
        let state = QueueState {
            len: 0,
            residual_arrival: 3.0,
            residual_service: 0.01,
            time: 0.0,
        };
        let mut sim = Simulator::from_state(&c, state, a, s);
        let r = sim.step().unwrap();
        assert_eq!(r.kind, EventKind::Arrival);
        assert_eq!(r.dt, 3.0);
        assert_eq!(r.rd_before, 0.01);
        assert_eq!(r.service_rate, 0.0);
    }

    #[test]
    fn simultaneous_expiry_is_split_arrival_first() {
        let c = cfg(
            RenewalSpec::Deterministic,
            vec![10.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
        );
        let (a, s) = streams();
        let state = QueueState {
            len: 3,
            residual_arrival: 0.5,
            residual_service: 0.5,
            time: 0.0,
        };
        let mut sim = Simulator::from_state(&c, state, a, s);
        let first = sim.step().unwrap();
        let second = sim.step().unwrap();
        assert_eq!(
            (first.kind, first.len_before, first.len_after),
            (EventKind::Arrival, 3, 4)
        );
        assert_eq!(
            (second.kind, second.len_before, second.len_after),
            (EventKind::Departure, 4, 3)
        );
        assert_eq!(first.dt, 0.5);
        assert_eq!(second.dt, 0.0);
        assert_eq!(first.rd_after, 0.0);
        assert_eq!(sim.state().residual_arrival, 1.0);
        assert_eq!(sim.state().residual_service, 1.0);
    }

    #[test]
    fn linear_drain() {
        let c = cfg(
            RenewalSpec::Exponential,
            vec![10.0],
            vec![2.0, 2.0],
            vec![1.5, 3.0],
        );
        let (a, s) = streams();
        let state = QueueState {
            len: 4,
            residual_arrival: 1.0,
            residual_service: 100.0,
            time: 0.0,
        };
        let mut sim = Simulator::from_state(&c, state, a, s);
        let r = sim.step().unwrap();
        assert_eq!(r.kind, EventKind::Arrival);
        assert_eq!(r.dt, 0.5);
        assert_eq!(r.rd_after, 100.0 - 0.5 * 1.5);
    }

    #[test]
    fn same_seed_reproduces_trajectory() {
        let c = cfg(
            RenewalSpec::Exponential,
            vec![3.0],
            vec![1.0, 1.0],
            vec![1.0, 1.5],
        );
        let run = || {
            let (a, s) = streams();
            let mut sim = Simulator::new(&c, a, s);
            (0..1000).map(|_| sim.step().unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
