//! Heavy-traffic sweeps over `n` with replica fan-out and persistence.

use std::io::{BufRead, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::des::{run_stationary, RunSettings, StationaryOutput};
use crate::error::{Error, Result};
use crate::limit::LimitDistribution;
use crate::model::HeavyTrafficModel;
use crate::sde::{diffusion_stream, run_sde_stationary, DiffusionParams};
use crate::stats::Estimate;
use crate::verify::compare::{ks_empirical_vs_limit, w1_empirical_vs_limit};

pub const SCHEMA_VERSION: u32 = 1;
const CSV_MAGIC: &str = "# mlqlab-sweep";

/// Per-replica event budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventBudget {
    Fixed(u64),
    /// `factor · n` events, so the scaled-time window is comparable across `n`.
    PerN(u64),
}

impl EventBudget {
    pub fn events(&self, n: u64) -> u64 {
        match *self {
            Self::Fixed(e) => e,
            Self::PerN(f) => f.saturating_mul(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdePlan {
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub model: HeavyTrafficModel,
    pub n_values: Vec<u64>,
    pub budget: EventBudget,
    pub replicas: u32,
    pub seed: u64,
    pub batches: usize,
    pub warmup_fraction: f64,
    pub sde: Option<SdePlan>,
}

impl SweepPlan {
    /// Checks the plan shape and that every `n` yields a valid system.
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one n".into()));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter(
                "replica count must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidParameter(
                "warm-up fraction must lie in [0, 1)".into(),
            ));
        }
        for &n in &self.n_values {
            self.model.build_prelimit(n)?;
        }
        Ok(())
    }

    fn settings(&self, group: u32, replica: u32, n: u64) -> RunSettings {
        let events = self.budget.events(n);
        RunSettings {
            events,
            warmup: Some((events as f64 * self.warmup_fraction) as u64),
            batches: self.batches,
            seed: self.seed,
            group,
            replica,
            log_cap: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    /// Total events over all replicas.
    pub events: u64,
    pub batches: usize,
    /// KS distance of the pooled scaled law to the limit.
    pub ks: f64,
    /// Mean and standard error of the per-replica KS distances.
    pub ks_replicas: Estimate,
    pub w1: f64,
    pub alpha_e: Estimate,
    pub empty_mass: Estimate,
    /// `n^{1/2} P(L = 0)`.
    pub scaled_empty_mass: Estimate,
    pub scaled_mean: Estimate,
    pub level_masses: Vec<Estimate>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u64,
    pub replicas: u32,
    pub metrics: Option<RowMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSummary {
    pub dt: f64,
    pub horizon: f64,
    pub ks: f64,
    pub w1: f64,
    pub mean: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub plan: SweepPlan,
    pub limit_masses: Vec<f64>,
    pub limit_mean: f64,
    /// `(-Σ b_i d_i) / μ_1`, the limit of `n^{1/2} P(L = 0)`.
    pub empty_mass_slope: f64,
    pub sde: Option<SdeSummary>,
    pub rows: Vec<SweepRow>,
}

/// Merges replica outputs after sorting by replica index, so the result
/// does not depend on completion order.
pub fn merge_replicas(mut parts: Vec<(u32, StationaryOutput)>) -> Result<StationaryOutput> {
    parts.sort_by_key(|p| p.0);
    let outputs: Vec<StationaryOutput> = parts.into_iter().map(|p| p.1).collect();
    StationaryOutput::merge(&outputs)
}

fn row_metrics(
    n: u64,
    parts: Vec<(u32, StationaryOutput)>,
    limit: &LimitDistribution,
    runtime_s: f64,
) -> Result<RowMetrics> {
    let per_replica: Vec<f64> = parts
        .iter()
        .map(|(_, p)| ks_empirical_vs_limit(&p.scaled_queue_length(), limit))
        .collect();
    let merged = merge_replicas(parts)?;
    let scaled = merged.scaled_queue_length();
    let mean_ks = per_replica.iter().sum::<f64>() / per_replica.len() as f64;
    let empty = merged.empty_mass();
    Ok(RowMetrics {
        events: merged.summary.events,
        batches: merged.queue_length.batch_count(),
        ks: ks_empirical_vs_limit(&scaled, limit),
        ks_replicas: Estimate::from_batches(mean_ks, &per_replica),
        w1: w1_empirical_vs_limit(&scaled, limit),
        alpha_e: merged.palm().alpha_e,
        empty_mass: empty,
        scaled_empty_mass: empty.scaled((n as f64).sqrt()),
        scaled_mean: scaled.mean(),
        level_masses: merged.level_masses(),
        runtime_s,
    })
}

/// One replica's output and wall time, or the error text.
type TimedRun = std::result::Result<(StationaryOutput, f64), String>;

/// Runs the DES for every `(n, replica)` pair in parallel, then the SDE once.
/// A failing `n` yields a row with `error` set; the sweep continues.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    if plan.n_values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one n".into()));
    }
    let limit = LimitDistribution::from_model(&plan.model)?;
    let configs: Vec<std::result::Result<_, String>> = plan
        .n_values
        .iter()
        .map(|&n| plan.model.build_prelimit(n).map_err(|e| e.to_string()))
        .collect();
    let pairs: Vec<(usize, u32)> = (0..plan.n_values.len())
        .flat_map(|g| (0..plan.replicas).map(move |r| (g, r)))
        .collect();
    let runs: Vec<(usize, u32, TimedRun)> = pairs
        .par_iter()
        .map(|&(g, r)| {
            let out = match &configs[g] {
                Ok(cfg) => {
                    let start = Instant::now();
                    run_stationary(cfg, &plan.settings(g as u32, r, plan.n_values[g]))
                        .map(|o| (o, start.elapsed().as_secs_f64()))
                        .map_err(|e| e.to_string())
                }
                Err(e) => Err(e.clone()),
            };
            (g, r, out)
        })
        .collect();

    let mut grouped: Vec<Vec<(u32, TimedRun)>> =
        (0..plan.n_values.len()).map(|_| Vec::new()).collect();
    for (g, r, out) in runs {
        grouped[g].push((r, out));
    }
    let mut rows = Vec::with_capacity(plan.n_values.len());
    for (g, group) in grouped.into_iter().enumerate() {
        let n = plan.n_values[g];
        let mut parts = Vec::new();
        let mut runtime = 0.0;
        let mut failure = None;
        for (r, out) in group {
            match out {
                Ok((o, t)) => {
                    runtime += t;
                    parts.push((r, o));
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        let outcome = match failure {
            Some(msg) => Err(msg),
            None => row_metrics(n, parts, &limit, runtime).map_err(|e| e.to_string()),
        };
        rows.push(match outcome {
            Ok(m) => SweepRow {
                n,
                replicas: plan.replicas,
                metrics: Some(m),
                error: None,
            },
            Err(msg) => SweepRow {
                n,
                replicas: plan.replicas,
                metrics: None,
                error: Some(msg),
            },
        });
    }

    let sde = match plan.sde {
        Some(SdePlan { dt, horizon }) => {
            let params = DiffusionParams::from_model(&plan.model, dt, horizon)?;
            let mut rng = diffusion_stream(plan.seed, 0, 0);
            let out = run_sde_stationary(&params, &mut rng)?;
            Some(SdeSummary {
                dt,
                horizon,
                ks: ks_empirical_vs_limit(&out.distribution, &limit),
                w1: w1_empirical_vs_limit(&out.distribution, &limit),
                mean: out.mean,
            })
        }
        None => None,
    };

    let drifts = plan.model.params.drifts();
    let slope = -drifts
        .iter()
        .zip(limit.d())
        .map(|(b, d)| b * d)
        .sum::<f64>()
        / plan.model.params.base_rates()[0];
    Ok(SweepResult {
        schema_version: SCHEMA_VERSION,
        plan: plan.clone(),
        limit_masses: limit.d().to_vec(),
        limit_mean: limit.mean(),
        empty_mass_slope: slope,
        sde,
        rows,
    })
}

impl SweepResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Parse("missing schema_version".into()))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: found as u32,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Per-`n` rows as CSV behind a versioned comment header.
    pub fn write_rows_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "{CSV_MAGIC} v{SCHEMA_VERSION}")?;
        let k = self.limit_masses.len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = [
            "n",
            "replicas",
            "error",
            "events",
            "batches",
            "runtime_s",
            "ks",
            "ks_replicas",
            "ks_replicas_se",
            "w1",
            "alpha_e",
            "alpha_e_se",
            "empty_mass",
            "empty_mass_se",
            "scaled_empty_mass",
            "scaled_empty_mass_se",
            "scaled_mean",
            "scaled_mean_se",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for i in 1..=k {
            header.push(format!("d{i}"));
            header.push(format!("d{i}_se"));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.n.to_string(),
                row.replicas.to_string(),
                row.error.clone().unwrap_or_default(),
            ];
            match &row.metrics {
                Some(m) => {
                    rec.extend([
                        m.events.to_string(),
                        m.batches.to_string(),
                        m.runtime_s.to_string(),
                    ]);
                    rec.push(m.ks.to_string());
                    rec.extend([
                        m.ks_replicas.value.to_string(),
                        m.ks_replicas.std_error.to_string(),
                    ]);
                    rec.push(m.w1.to_string());
                    for e in [m.alpha_e, m.empty_mass, m.scaled_empty_mass, m.scaled_mean] {
                        rec.extend([e.value.to_string(), e.std_error.to_string()]);
                    }
                    for e in &m.level_masses {
                        rec.extend([e.value.to_string(), e.std_error.to_string()]);
                    }
                }
                None => rec.extend(std::iter::repeat_n(String::new(), header.len() - 3)),
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_rows_csv`](Self::write_rows_csv).
    pub fn read_rows_csv<R: BufRead>(mut reader: R) -> Result<Vec<SweepRow>> {
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let version = first
            .trim()
            .strip_prefix(CSV_MAGIC)
            .and_then(|v| v.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| Error::Parse("missing sweep CSV header".into()))?;
        if version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: version,
            });
        }
        let mut r = csv::Reader::from_reader(reader);
        let width = r.headers()?.len();
        if width < 18 || (width - 18) % 2 != 0 {
            return Err(Error::Parse(format!("unexpected column count {width}")));
        }
        let levels = (width - 18) / 2;
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != width {
                return Err(Error::Parse(format!(
                    "row {} has {} of {width} fields",
                    line + 1,
                    rec.len()
                )));
            }
            let bad =
                |c: usize| Error::Parse(format!("row {} column {c}: {:?}", line + 1, &rec[c]));
            let f = |c: usize| rec[c].parse::<f64>().map_err(|_| bad(c));
            let u = |c: usize| rec[c].parse::<u64>().map_err(|_| bad(c));
            let n = u(0)?;
            let replicas = u(1)? as u32;
            let error = (!rec[2].is_empty()).then(|| rec[2].to_string());
            if rec[3].is_empty() {
                rows.push(SweepRow {
                    n,
                    replicas,
                    metrics: None,
                    error,
                });
                continue;
            }
            let batches = u(4)? as usize;
            let est = |c: usize, b: usize| -> Result<Estimate> {
                Ok(Estimate {
                    value: f(c)?,
                    std_error: f(c + 1)?,
                    batches: b,
                })
            };
            let metrics = RowMetrics {
                events: u(3)?,
                batches,
                runtime_s: f(5)?,
                ks: f(6)?,
                ks_replicas: est(7, replicas as usize)?,
                w1: f(9)?,
                alpha_e: est(10, batches)?,
                empty_mass: est(12, batches)?,
                scaled_empty_mass: est(14, batches)?,
                scaled_mean: est(16, batches)?,
                level_masses: (0..levels)
                    .map(|i| est(18 + 2 * i, batches))
                    .collect::<Result<_>>()?,
            };
            rows.push(SweepRow {
                n,
                replicas,
                metrics: Some(metrics),
                error,
            });
        }
        Ok(rows)
    }
}
