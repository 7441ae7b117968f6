use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use mlqlab::des::{run_replicas, validate_trajectory, RunSettings};
use mlqlab::distributions::{RngStream, StreamPurpose};
use mlqlab::orchestrate::{run_sweep, EventBudget, SdePlan, SweepPlan, SweepResult};
use mlqlab::sde::{diffusion_stream, run_sde_stationary, DiffusionParams};
use mlqlab::verify::{
    compare, daley_miyazawa_check, expansion_errors, identity_report, solve_eta_zeta, Law,
    RenewalTrace, TestFunction,
};
use mlqlab::{EmpiricalDistribution, Estimate, LabConfig, LimitDistribution};
use serde::Serialize;

use crate::output::{ecdf_points, read_ecdf, Sink};
use crate::{Cli, Command, Format, RunArgs};

const DEFAULT_CONFIG: &str = include_str!("../../../configs/e1.toml");
/// Hard cap on event-log rows.
const MAX_LOG_ROWS: usize = 1_000_000;
const SUMMARY_SCHEMA: u32 = 1;
const CI_LEVEL: f64 = 0.95;

/// Shared by the DES and SDE so `compare` and downstream tools see one layout.
#[derive(Debug, Serialize)]
struct RunReport {
    schema_version: u32,
    source: &'static str,
    n: Option<u64>,
    seed: u64,
    replicas: u32,
    alpha_e: Option<Estimate>,
    alpha_d: Option<Estimate>,
    level_masses: Vec<Estimate>,
    limit_masses: Vec<f64>,
    empty_mass: Option<Estimate>,
    scaled_mean: Estimate,
    events: u64,
    warmup_events: u64,
    observed_events: u64,
    wall_time_s: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.global.config {
        Some(path) => {
            LabConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => LabConfig::from_toml_str(DEFAULT_CONFIG)?,
    };
    let g = &cli.global;
    let replicas = g.replicas.unwrap_or(cfg.sweep.replicas);
    if replicas == 0 {
        bail!("--replicas must be positive");
    }
    let sink = Sink::new(&g.out_dir, g.format)?;
    let limit = LimitDistribution::from_model(&cfg.model)?;
    let written: Vec<PathBuf> = match cli.command {
        Command::Density { points, upper } => density(&sink, &limit, points, upper)?,
        Command::Simulate { n, run, log_cap } => {
            simulate(&sink, &cfg, &limit, g.seed, replicas, n, &run, log_cap)?
        }
        Command::Sde {
            dt,
            horizon,
            batches,
        } => sde(&sink, &cfg, &limit, g.seed, replicas, dt, horizon, batches)?,
        Command::Barcheck { n, run } => {
            let pc = cfg.model.build_prelimit(n)?;
            let settings = settings(&cfg, g.seed, n, &run);
            let report =
                identity_report(&pc, &settings, replicas, &TestFunction::default_set(&pc))?;
            vec![sink.json("barcheck", &report)?]
        }
        Command::Etazeta {
            theta,
            m,
            expansion_n,
            expansion_theta,
        } => {
            let (a, s) = (&cfg.model.arrival, &cfg.model.service);
            let solutions = theta
                .iter()
                .map(|&t| solve_eta_zeta(a, s, m, t))
                .collect::<mlqlab::Result<Vec<_>>>()?;
            #[derive(Serialize)]
            struct Expansion {
                n: f64,
                theta: f64,
                eta_error: f64,
                zeta_error: f64,
            }
            let expansion = expansion_n
                .iter()
                .map(|&n| {
                    let (eta_error, zeta_error) = expansion_errors(a, s, n, expansion_theta)?;
                    Ok(Expansion {
                        n,
                        theta: expansion_theta,
                        eta_error,
                        zeta_error,
                    })
                })
                .collect::<mlqlab::Result<Vec<_>>>()?;
            let report = serde_json::json!({ "solutions": solutions, "expansion": expansion });
            vec![sink.json("etazeta", &report)?]
        }
        Command::Dmcheck { events, tol } => {
            let mut reports = Vec::new();
            for (i, (name, spec)) in [
                ("arrival", cfg.model.arrival),
                ("service", cfg.model.service),
            ]
            .into_iter()
            .enumerate()
            {
                let mut rng = RngStream::derive(g.seed, StreamPurpose::RenewalTrace, i as u32, 0);
                let trace = RenewalTrace::simulate(&spec, events, &mut rng);
                let outcome = daley_miyazawa_check(&trace, tol);
                reports.push(serde_json::json!({
                    "clock": name,
                    "spec": spec,
                    "events": events,
                    "tolerance": tol,
                    "passed": outcome.is_ok(),
                    "report": outcome.as_ref().ok(),
                    "error": outcome.as_ref().err().map(ToString::to_string),
                }));
            }
            vec![sink.json("dmcheck", &reports)?]
        }
        Command::Compare { a, b } => {
            let ea = read_ecdf(&a)?;
            let result = match b {
                Some(b) => compare(&Law::Empirical(&ea), &Law::Empirical(&read_ecdf(&b)?))?,
                None => compare(&Law::Empirical(&ea), &Law::Limit(&limit))?,
            };
            vec![sink.json("compare", &result)?]
        }
        Command::Sweep {
            n,
            events,
            events_per_n,
            batches,
            warmup_fraction,
            sde,
        } => {
            let s = &cfg.sweep;
            let budget = match events.or(s.events) {
                Some(e) => EventBudget::Fixed(e),
                None => EventBudget::PerN(events_per_n.unwrap_or(s.events_per_n)),
            };
            let plan = SweepPlan {
                model: cfg.model.clone(),
                n_values: n.unwrap_or_else(|| s.n.clone()),
                budget,
                replicas,
                seed: g.seed,
                batches: batches.unwrap_or(s.batches),
                warmup_fraction: warmup_fraction.unwrap_or(s.warmup_fraction),
                sde: sde.then_some(SdePlan {
                    dt: s.sde_dt,
                    horizon: s.sde_horizon,
                }),
            };
            let result = run_sweep(&plan)?;
            for row in &result.rows {
                if let Some(e) = &row.error {
                    eprintln!("n = {}: {e}", row.n);
                }
            }
            match sink.format() {
                Format::Json => vec![sink.json("sweep", &result)?],
                Format::Csv => {
                    let path = sink.path("sweep.csv");
                    result.write_rows_csv(BufWriter::new(File::create(&path)?))?;
                    // Round-trip guard: the table we just wrote must read back.
                    SweepResult::read_rows_csv(BufReader::new(File::open(&path)?))?;
                    vec![path, sink.json("sweep_meta", &result)?]
                }
            }
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn settings(cfg: &LabConfig, seed: u64, n: u64, run: &RunArgs) -> RunSettings {
    let events = run
        .events
        .or(cfg.sweep.events)
        .unwrap_or(cfg.sweep.events_per_n.saturating_mul(n));
    let fraction = run.warmup_fraction.unwrap_or(cfg.sweep.warmup_fraction);
    RunSettings {
        warmup: Some((events as f64 * fraction) as u64),
        batches: run.batches.unwrap_or(cfg.sweep.batches),
        ..RunSettings::new(events, seed)
    }
}

fn density(
    sink: &Sink,
    limit: &LimitDistribution,
    points: usize,
    upper: Option<f64>,
) -> Result<Vec<PathBuf>> {
    if points < 2 {
        bail!("--points must be at least 2");
    }
    let upper = match upper {
        Some(u) if u > 0.0 => u,
        Some(u) => bail!("--upper must be positive, got {u}"),
        None => limit.quantile(1.0 - 1e-6)?,
    };
    let rows: Vec<Vec<f64>> = (0..points)
        .map(|i| {
            let x = upper * i as f64 / (points - 1) as f64;
            vec![x, limit.pdf(x), limit.cdf(x)]
        })
        .collect();
    Ok(vec![sink.table(
        "density",
        Some(&limit.coefficients()),
        &["x", "pdf", "cdf"],
        &rows,
    )?])
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    sink: &Sink,
    cfg: &LabConfig,
    limit: &LimitDistribution,
    seed: u64,
    replicas: u32,
    n: u64,
    run: &RunArgs,
    log_cap: usize,
) -> Result<Vec<PathBuf>> {
    let pc = cfg.model.build_prelimit(n)?;
    let settings = RunSettings {
        log_cap: log_cap.min(MAX_LOG_ROWS),
        ..settings(cfg, seed, n, run)
    };
    let out = run_replicas(&pc, &settings, replicas)?;
    let palm = out.palm();
    let scaled = out.scaled_queue_length();
    let report = RunReport {
        schema_version: SUMMARY_SCHEMA,
        source: "des",
        n: Some(n),
        seed,
        replicas,
        alpha_e: Some(palm.alpha_e),
        alpha_d: Some(palm.alpha_d),
        level_masses: out.level_masses(),
        limit_masses: limit.d().to_vec(),
        empty_mass: Some(out.empty_mass()),
        scaled_mean: scaled.mean(),
        events: out.summary.events,
        warmup_events: out.summary.warmup,
        observed_events: out.summary.observed_events,
        wall_time_s: out.summary.wall_time_s,
    };
    let mut written = vec![
        sink.ecdf("ecdf", &ecdf_points(&scaled, CI_LEVEL))?,
        sink.json("summary", &report)?,
    ];
    if let Some(log) = &out.log {
        validate_trajectory(log, &pc).context("event log failed validation")?;
        let path = sink.path("events.csv");
        log.write_csv(BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

#[allow(clippy::too_many_arguments)]
fn sde(
    sink: &Sink,
    cfg: &LabConfig,
    limit: &LimitDistribution,
    seed: u64,
    replicas: u32,
    dt: f64,
    horizon: f64,
    batches: usize,
) -> Result<Vec<PathBuf>> {
    let params = DiffusionParams {
        batches,
        ..DiffusionParams::from_model(&cfg.model, dt, horizon)?
    };
    let mut parts = Vec::with_capacity(replicas as usize);
    let (mut steps, mut wall) = (0u64, 0.0);
    for r in 0..replicas {
        let out = run_sde_stationary(&params, &mut diffusion_stream(seed, 0, r))?;
        steps += out.steps;
        wall += out.wall_time_s;
        parts.push(out.distribution);
    }
    let dist = EmpiricalDistribution::merge(&parts)?;
    let partition = limit.partition();
    let level_masses = (0..partition.level_count())
        .map(|i| dist.mass(|x| partition.index_of(x) == i))
        .collect();
    let warmup = (params.warmup_time() / dt).round() as u64 * u64::from(replicas);
    let report = RunReport {
        schema_version: SUMMARY_SCHEMA,
        source: "sde",
        n: None,
        seed,
        replicas,
        alpha_e: None,
        alpha_d: None,
        level_masses,
        limit_masses: limit.d().to_vec(),
        empty_mass: None,
        scaled_mean: dist.mean(),
        events: steps + warmup,
        warmup_events: warmup,
        observed_events: steps,
        wall_time_s: wall,
    };
    Ok(vec![
        sink.ecdf("ecdf", &ecdf_points(&dist, CI_LEVEL))?,
        sink.json("summary", &report)?,
    ])
}
