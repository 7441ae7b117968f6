use std::io::Write;

use serde::{Deserialize, Serialize};

use super::run::RunSettings;
use super::{EventKind, EventRecord, QueueState};
use crate::distributions::{RngStream, StreamPurpose};
use crate::error::{Error, Result};
use crate::model::PrelimitConfig;

/// Capped event log recorded from time zero, for debugging and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub initial: QueueState,
    pub seed: u64,
    pub group: u32,
    pub replica: u32,
    pub cap: usize,
    pub records: Vec<EventRecord>,
    /// True once records beyond `cap` were dropped.
    pub truncated: bool,
}

impl EventLog {
    pub fn new(initial: QueueState, settings: &RunSettings, cap: usize) -> Self {
        Self {
            initial,
            seed: settings.seed,
            group: settings.group,
            replica: settings.replica,
            cap,
            records: Vec::with_capacity(cap.min(1 << 20)),
            truncated: false,
        }
    }

    pub fn push(&mut self, record: EventRecord) {
        if self.records.len() < self.cap {
            self.records.push(record);
        } else {
            self.truncated = true;
        }
    }

    /// Counting processes `(N_e, N_d)` after the last logged event.
    pub fn counts(&self) -> (u64, u64) {
        let arrivals = self
            .records
            .iter()
            .filter(|r| r.kind == EventKind::Arrival)
            .count() as u64;
        (arrivals, self.records.len() as u64 - arrivals)
    }

    /// One CSV row per event, with a header row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Totals from a successful [`validate_trajectory`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub events_checked: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub empty_intervals: u64,
    pub max_work_error: f64,
}

const WORK_TOL: f64 = 1e-9;

/// Checks a log against the pathwise dynamics and the seeded streams.
///
/// Returns the first violation as [`Error::Corrupted`] carrying the offending
/// event index.
pub fn validate_trajectory(log: &EventLog, cfg: &PrelimitConfig) -> Result<ValidationReport> {
    let fail = |event: u64, detail: String| Err(Error::Corrupted { event, detail });
    let mut arrival_rng = RngStream::derive(
        log.seed,
        StreamPurpose::ArrivalClock,
        log.group,
        log.replica,
    );
    let mut service_rng = RngStream::derive(
        log.seed,
        StreamPurpose::ServiceClock,
        log.group,
        log.replica,
    );
    let mut last_ta = cfg.arrival_spec().sample(&mut arrival_rng);
    let mut last_ts = cfg.service_spec().sample(&mut service_rng);
    let init = log.initial;
    if init.residual_arrival != last_ta || init.residual_service != last_ts {
        return fail(0, "initial residuals are not the first stream draws".into());
    }

    let (mut n_e, mut n_d) = (0u64, 0u64);
    let (mut work_a, mut work_s) = (0.0f64, 0.0f64);
    let mut report = ValidationReport {
        events_checked: 0,
        arrivals: 0,
        departures: 0,
        empty_intervals: 0,
        max_work_error: 0.0,
    };
    let mut prev_len = init.len;
    let mut prev_time = init.time;
    let mut prev_re = init.residual_arrival;
    let mut prev_rd = init.residual_service;

    for r in &log.records {
        let i = r.index;
        if r.len_before != prev_len {
            return fail(
                i,
                format!(
                    "L jumped from {prev_len} to {} between events",
                    r.len_before
                ),
            );
        }
        if r.re_start != prev_re || r.rd_start != prev_rd {
            return fail(i, "residuals changed between events".into());
        }
        if prev_rd == 0.0 && !(r.kind == EventKind::Departure && r.dt == 0.0) {
            return fail(
                i,
                "expired service clock not followed by a simultaneous departure".into(),
            );
        }
        if r.time != prev_time + r.dt || !(r.dt >= 0.0) {
            return fail(
                i,
                format!("clock inconsistent: {} != {} + {}", r.time, prev_time, r.dt),
            );
        }
        if r.arrival_rate != cfg.arrival_rate_at(r.len_before)
            || r.service_rate != cfg.service_rate_at(r.len_before)
        {
            return fail(
                i,
                format!("rates do not match level of L = {}", r.len_before),
            );
        }
        if r.len_before == 0 {
            report.empty_intervals += 1;
            if r.rd_before != r.rd_start {
                return fail(i, "R_d changed while the system was empty".into());
            }
        }
        work_a += r.arrival_rate * r.dt;
        work_s += r.service_rate * r.dt;

        match r.kind {
            EventKind::Arrival => {
                n_e += 1;
                if r.len_after != r.len_before + 1 {
                    return fail(
                        i,
                        format!("arrival moved L from {} to {}", r.len_before, r.len_after),
                    );
                }
                let err = (work_a - last_ta).abs();
                report.max_work_error = report.max_work_error.max(err);
                if err > WORK_TOL {
                    return fail(
                        i,
                        format!("arrival work {work_a} differs from T_A = {last_ta}"),
                    );
                }
                let draw = cfg.arrival_spec().sample(&mut arrival_rng);
                if r.re_after != draw {
                    return fail(
                        i,
                        format!(
                            "R_e refilled with {} but the stream drew {draw}",
                            r.re_after
                        ),
                    );
                }
                if r.rd_after != r.rd_before {
                    return fail(i, "arrival changed R_d".into());
                }
                last_ta = draw;
                work_a = 0.0;
            }
            EventKind::Departure => {
                n_d += 1;
                if r.len_before == 0 || r.len_after + 1 != r.len_before {
                    return fail(
                        i,
                        format!("departure moved L from {} to {}", r.len_before, r.len_after),
                    );
                }
                let err = (work_s - last_ts).abs();
                report.max_work_error = report.max_work_error.max(err);
                if err > WORK_TOL {
                    return fail(
                        i,
                        format!("service work {work_s} differs from T_S = {last_ts}"),
                    );
                }
                let draw = cfg.service_spec().sample(&mut service_rng);
                if r.rd_after != draw {
                    return fail(
                        i,
                        format!(
                            "R_d refilled with {} but the stream drew {draw}",
                            r.rd_after
                        ),
                    );
                }
                if r.re_after != r.re_before {
                    return fail(i, "departure changed R_e".into());
                }
                last_ts = draw;
                work_s = 0.0;
            }
        }
        if r.len_after as i128 - init.len as i128 != n_e as i128 - n_d as i128 {
            return fail(
                i,
                format!(
                    "L - L(0) = {} but N_e - N_d = {}",
                    r.len_after as i128 - init.len as i128,
                    n_e as i128 - n_d as i128
                ),
            );
        }
        if !(r.re_after > 0.0) || r.rd_after < 0.0 {
            return fail(i, "nonpositive residual after event".into());
        }
        prev_len = r.len_after;
        prev_time = r.time;
        prev_re = r.re_after;
        prev_rd = r.rd_after;
        report.events_checked += 1;
    }
    report.arrivals = n_e;
    report.departures = n_d;
    Ok(report)
}
