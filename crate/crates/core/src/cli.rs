//! Run and sweep drivers that write the CSV/JSON artifacts.
//!
//! Exit codes: 0 on a finished run (any non-error status), 1 on input or IO
//! errors, 2 when the sensing requirement cannot be met.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::write_channel_dump;
use crate::error::{Error, Result};
use crate::fmt_sig;
use crate::metrics::MissionMetrics;
use crate::orchestrate::{evaluate, feasibility_residual, run_baseline, DesignState, RunRecord, RunStatus, Scheme};
use crate::scenario::{default_scenario, linear_to_db, load_config, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    if err.is_infeasible() {
        EXIT_INFEASIBLE
    } else {
        EXIT_ERROR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    PowerDbm,
    SenseRate,
    Slots,
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::PowerDbm => "power_dbm",
            SweepAxis::SenseRate => "sense_rate",
            SweepAxis::Slots => "slots",
        }
    }

    /// `cfg` with the axis set to `v`.
    pub fn apply(&self, cfg: &ScenarioConfig, v: f64) -> Result<ScenarioConfig> {
        let cfg = cfg.clone();
        Ok(match self {
            SweepAxis::PowerDbm => cfg.with_tx_power_dbm(v),
            SweepAxis::SenseRate => cfg.with_sense_rate(v),
            SweepAxis::Slots => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Sweep(format!("slots must be a positive integer, got {v}")));
                }
                cfg.with_slots(v as usize)
            }
        })
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepAxis::PowerDbm, SweepAxis::SenseRate, SweepAxis::Slots]
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::Sweep(format!("unknown axis `{s}` (expected power_dbm, sense_rate or slots)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// Parses `axis=v1,v2,...`.
    pub fn parse(text: &str, seeds: Vec<u64>) -> Result<Self> {
        let (axis, list) = text
            .split_once('=')
            .ok_or_else(|| Error::Sweep(format!("expected <axis>=<v1,v2,...>, got `{text}`")))?;
        let values = list
            .split(',')
            .map(|v| {
                let v = v.trim();
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Sweep(format!("bad value `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = SweepSpec {
            axis: axis.trim().parse()?,
            values,
            seeds,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Sweep("no values".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Sweep("no seeds".into()));
        }
        Ok(())
    }
}

/// Comma-separated seed list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Sweep(format!("bad seed `{s}`")))
        })
        .collect()
}

/// Common options of both drivers.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    /// Overrides the config seed when set.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub scheme: Scheme,
    pub max_iters: Option<usize>,
    pub quiet: bool,
    pub dump_channels: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            config: None,
            seed: None,
            out_dir: PathBuf::from("out"),
            scheme: Scheme::Proposed,
            max_iters: None,
            quiet: false,
            dump_channels: false,
        }
    }
}

/// Config from file (or the default scenario) with command-line overrides.
pub fn load_scenario(opts: &RunOptions) -> Result<ScenarioConfig> {
    let mut cfg = match &opts.config {
        Some(p) => load_config(p)?,
        None => default_scenario(),
    };
    if let Some(seed) = opts.seed {
        cfg.rng_seed = seed;
    }
    if let Some(k) = opts.max_iters {
        cfg.max_outer_iters = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Contents of summary.json. Non-finite numbers serialize as `null`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scheme: Scheme,
    pub seed: u64,
    pub status: String,
    pub initial_r_sum: f64,
    pub final_r_sum: f64,
    pub iterations: usize,
    pub feas_residual: f64,
    pub min_distance_ut: f64,
    pub mean_distance_iot: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

fn status_label(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Converged => "converged",
        RunStatus::MaxIters => "max_iters",
        RunStatus::RolledBack => "rolled_back",
        RunStatus::Fixed => "fixed",
    }
}

/// Writes `bytes` next to `path` and renames, so readers never see a
/// partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn convergence_csv(record: &RunRecord) -> String {
    let mut s = String::from("iteration,r_sum,delta,feas_residual\n");
    s.push_str(&format!(
        "0,{},{},{}\n",
        fmt_sig(record.initial_r_sum),
        fmt_sig(0.0),
        fmt_sig(record.initial_feas_residual)
    ));
    for it in &record.iterations {
        s.push_str(&format!(
            "{},{},{},{}\n",
            it.iteration,
            fmt_sig(it.r_sum),
            fmt_sig(it.delta),
            fmt_sig(it.feas_residual)
        ));
    }
    s
}

pub fn metrics_csv(m: &MissionMetrics) -> String {
    let mut s = String::from("slot,snr_ud_db,snr_ut_db,snr_echo_db,secrecy\n");
    for (i, sm) in m.slots.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            fmt_sig(linear_to_db(sm.snr_ud)),
            fmt_sig(linear_to_db(sm.snr_ut)),
            fmt_sig(linear_to_db(sm.snr_echo)),
            fmt_sig(sm.secrecy)
        ));
    }
    s
}

fn summary_json(summary: &Summary) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(summary).map_err(|e| Error::io("summary.json", std::io::Error::other(e)))?;
    v.push(b'\n');
    Ok(v)
}

/// Writes convergence.csv, trajectory.csv, metrics.csv and summary.json
/// (plus channels.csv when asked) into `dir`.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ScenarioConfig,
    state: &DesignState,
    record: &RunRecord,
    dump_channels: bool,
) -> Result<Summary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metrics = evaluate(cfg, state)?;
    write_atomic(&dir.join("convergence.csv"), convergence_csv(record).as_bytes())?;
    let mut traj = Vec::new();
    state.trajectory.write_csv(&mut traj).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("trajectory.csv"), &traj)?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&metrics).as_bytes())?;
    if dump_channels {
        let mut buf = Vec::new();
        write_channel_dump(&mut buf, &state.channels).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("channels.csv"), &buf)?;
    }
    let summary = Summary {
        scheme: record.scheme,
        seed: cfg.rng_seed,
        status: status_label(record.status).into(),
        initial_r_sum: record.initial_r_sum,
        final_r_sum: record.final_r_sum,
        iterations: record.iterations.len(),
        feas_residual: feasibility_residual(cfg, state)?,
        min_distance_ut: state.trajectory.min_distance_to(&cfg.ut),
        mean_distance_iot: state.trajectory.mean_distance_to(&cfg.iot),
        message: None,
    };
    write_atomic(&dir.join("summary.json"), &summary_json(&summary)?)?;
    Ok(summary)
}

/// summary.json for a point where sensing could not be met (secrecy 0).
fn write_infeasible(dir: &Path, cfg: &ScenarioConfig, scheme: Scheme, err: &Error) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = Summary {
        scheme,
        seed: cfg.rng_seed,
        status: "infeasible".into(),
        initial_r_sum: 0.0,
        final_r_sum: 0.0,
        iterations: 0,
        feas_residual: f64::NAN,
        min_distance_ut: f64::NAN,
        mean_distance_iot: f64::NAN,
        message: Some(err.to_string()),
    };
    write_atomic(&dir.join("summary.json"), &summary_json(&summary)?)
}

/// Single run of `opts.scheme`.
pub fn cmd_run(opts: &RunOptions) -> i32 {
    match try_run(opts) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn try_run(opts: &RunOptions) -> Result<()> {
    let cfg = load_scenario(opts)?;
    match run_baseline(&cfg, opts.scheme) {
        Ok((state, record)) => {
            let s = write_artifacts(&opts.out_dir, &cfg, &state, &record, opts.dump_channels)?;
            if !opts.quiet {
                println!(
                    "{} seed {}: R_sum {:.6} bps/Hz after {} iterations ({})",
                    s.scheme, s.seed, s.final_r_sum, s.iterations, s.status
                );
            }
            Ok(())
        }
        Err(e) if e.is_infeasible() => {
            write_infeasible(&opts.out_dir, &cfg, opts.scheme, &e)?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

/// One row of sweep.csv.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub r_sum: f64,
    pub status: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("axis,value,seed,scheme,r_sum,status\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.axis,
            fmt_sig(r.value),
            r.seed,
            r.scheme,
            fmt_sig(r.r_sum),
            r.status
        ));
    }
    s
}

/// Sub-directory of one sweep point, e.g. `power_dbm-33-seed0`.
pub fn point_dir(axis: SweepAxis, value: f64, seed: u64) -> String {
    format!("{axis}-{value}-seed{seed}")
}

/// Runs `schemes` at every (value, seed) of `spec`. Infeasible points are
/// recorded with zero secrecy; any other error aborts the sweep.
pub fn run_sweep(opts: &RunOptions, spec: &SweepSpec, schemes: &[Scheme], jobs: usize) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let base = load_scenario(&RunOptions {
        seed: None,
        ..opts.clone()
    })?;
    let mut tasks = Vec::new();
    for &v in &spec.values {
        for &seed in &spec.seeds {
            let cfg = spec.axis.apply(&base, v)?.with_seed(seed);
            cfg.validate()?;
            for &k in schemes {
                tasks.push((v, seed, k, cfg.clone()));
            }
        }
    }
    fs::create_dir_all(&opts.out_dir).map_err(|e| Error::io(&opts.out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Sweep(e.to_string()))?;
    let rows = pool.install(|| {
        tasks
            .par_iter()
            .map(|(v, seed, k, cfg)| {
                let dir = opts.out_dir.join(point_dir(spec.axis, *v, *seed)).join(k.label());
                let (r_sum, status) = match run_baseline(cfg, *k) {
                    Ok((state, record)) => {
                        let s = write_artifacts(&dir, cfg, &state, &record, opts.dump_channels)?;
                        (s.final_r_sum, s.status)
                    }
                    Err(e) if e.is_infeasible() => {
                        write_infeasible(&dir, cfg, *k, &e)?;
                        (0.0, "infeasible".to_string())
                    }
                    Err(e) => return Err(e),
                };
                if !opts.quiet {
                    println!("{}={v} seed {seed} {k}: R_sum {r_sum:.6} ({status})", spec.axis);
                }
                Ok(SweepRow {
                    axis: spec.axis.label().into(),
                    value: *v,
                    seed: *seed,
                    scheme: *k,
                    r_sum,
                    status,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_atomic(&opts.out_dir.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

pub fn cmd_sweep(opts: &RunOptions, spec: &SweepSpec, schemes: &[Scheme], jobs: usize) -> i32 {
    match run_sweep(opts, spec, schemes, jobs) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
