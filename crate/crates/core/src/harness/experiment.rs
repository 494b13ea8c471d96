use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_instance, ExperimentConfig};
use crate::amp::{self, Trace};
use crate::csvio::{opt_cell, schema_writer};
use crate::error::{Error, Result};
use crate::model::{mean_square, sdr_db};
use crate::rng::derive_seed;
use crate::se::se_run_window;

pub const TRIALS_SCHEMA: &str = "ampud.trials.v1";
pub const ITERATIONS_SCHEMA: &str = "ampud.iterations.v1";
pub const SUMMARY_SCHEMA: &str = "ampud.summary.v1";
pub const SE_COMPARE_SCHEMA: &str = "ampud.se-compare.v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Diverged,
    Failed,
}

impl TrialStatus {
    fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Diverged => "diverged",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub rate: f64,
    pub m: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub sigma_z_sq: f64,
    /// `‖x‖²/N` of the drawn signal.
    pub signal_power: f64,
    pub status: TrialStatus,
    pub error: Option<String>,
    pub sdr_db: Option<f64>,
    pub final_mse: Option<f64>,
    pub trace: Trace,
}

/// JSON has no infinities; exact recoveries (SDR = +inf) are written as
/// the string `"inf"`.
fn opt_float<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if x.is_nan() => s.serialize_str("nan"),
        Some(x) => s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" }),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub rate: f64,
    pub m: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub ok_trials: usize,
    pub diverged: usize,
    #[serde(serialize_with = "opt_float")]
    pub mean_sdr_db: Option<f64>,
    #[serde(serialize_with = "opt_float")]
    pub stderr_sdr_db: Option<f64>,
    pub mean_final_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by measurement count (config order), SNR (config order), trial.
    pub trials: Vec<TrialResult>,
    pub cells: Vec<CellSummary>,
}

/// Mean and standard error (sample standard deviation over √n).
pub(crate) fn mean_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

fn run_trial(cfg: &ExperimentConfig, m: usize, snr_db: f64, trial: usize) -> Result<TrialResult> {
    let inst = generate_instance(&cfg.source, cfg.n, m, snr_db, cfg.seed, trial)?;
    let denoiser = cfg.denoiser.build(&cfg.source)?;
    let mut row = TrialResult {
        rate: m as f64 / cfg.n as f64,
        m,
        snr_db,
        trial,
        sigma_z_sq: inst.system.sigma_z_sq(),
        signal_power: mean_square(&inst.x),
        status: TrialStatus::Ok,
        error: None,
        sdr_db: None,
        final_mse: None,
        trace: Trace::default(),
    };
    match amp::run(&inst.system, denoiser.as_ref(), &cfg.amp_config(), Some(&inst.x)) {
        Ok(run) => {
            row.sdr_db = Some(sdr_db(&inst.x, &run.state.x)?);
            row.final_mse = run.trace.rows.last().and_then(|r| r.mse);
            row.trace = run.trace;
        }
        Err(fail) => {
            row.status = match fail.error {
                Error::Diverged { .. } => TrialStatus::Diverged,
                _ => TrialStatus::Failed,
            };
            row.error = Some(fail.error.to_string());
            row.trace = fail.trace;
        }
    }
    Ok(row)
}

/// Runs every trial of the sweep. Trials run concurrently; a diverging trial
/// is recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let ms = cfg.measurement_counts();
    let jobs: Vec<(usize, f64, usize)> = ms
        .iter()
        .flat_map(|&m| cfg.snr_db.iter().flat_map(move |&s| (0..cfg.trials).map(move |t| (m, s, t))))
        .collect();
    let trials: Vec<TrialResult> =
        jobs.par_iter().map(|&(m, s, t)| run_trial(cfg, m, s, t)).collect::<Result<_>>()?;

    let cells = trials
        .chunks(cfg.trials)
        .map(|chunk| {
            let sdrs: Vec<f64> = chunk.iter().filter_map(|t| t.sdr_db).collect();
            let mses: Vec<f64> = chunk.iter().filter_map(|t| t.final_mse).collect();
            let (mean_sdr_db, stderr_sdr_db) = mean_stderr(&sdrs);
            CellSummary {
                rate: chunk[0].rate,
                m: chunk[0].m,
                snr_db: chunk[0].snr_db,
                trials: chunk.len(),
                ok_trials: chunk.iter().filter(|t| t.status == TrialStatus::Ok).count(),
                diverged: chunk.iter().filter(|t| t.status == TrialStatus::Diverged).count(),
                mean_sdr_db,
                stderr_sdr_db,
                mean_final_mse: mean_stderr(&mses).0,
            }
        })
        .collect();
    Ok(ExperimentResult { config: cfg.clone(), trials, cells })
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'static str,
    config: &'a ExperimentConfig,
    cells: &'a [CellSummary],
}

/// Writes `trials.csv`, `iterations.csv` and `summary.json` into `dir`.
pub fn write_experiment(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut w = schema_writer(dir.join("trials.csv"), TRIALS_SCHEMA)?;
    w.write_record([
        "rate", "m", "snr_db", "trial", "sigma_z_sq", "status", "iterations", "final_mse", "sdr_db", "error",
    ])?;
    for t in &result.trials {
        w.write_record([
            t.rate.to_string(),
            t.m.to_string(),
            t.snr_db.to_string(),
            t.trial.to_string(),
            t.sigma_z_sq.to_string(),
            t.status.as_str().to_string(),
            t.trace.rows.len().saturating_sub(1).to_string(),
            opt_cell(t.final_mse),
            opt_cell(t.sdr_db),
            t.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    let mut w = schema_writer(dir.join("iterations.csv"), ITERATIONS_SCHEMA)?;
    w.write_record(["rate", "m", "snr_db", "trial", "t", "sigma_hat_sq", "mse"])?;
    for t in &result.trials {
        for r in &t.trace.rows {
            w.write_record([
                t.rate.to_string(),
                t.m.to_string(),
                t.snr_db.to_string(),
                t.trial.to_string(),
                r.t.to_string(),
                r.sigma_hat_sq.to_string(),
                opt_cell(r.mse),
            ])?;
        }
    }
    w.flush()?;

    let summary = Summary { schema: SUMMARY_SCHEMA, config: &result.config, cells: &result.cells };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

/// Empirical AMP MSE next to the state-evolution prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeRow {
    pub rate: f64,
    pub m: usize,
    pub snr_db: f64,
    pub t: usize,
    /// Trials contributing at this iteration.
    pub trials: usize,
    pub empirical_mse_mean: f64,
    pub empirical_mse_stderr: Option<f64>,
    pub se_predicted_mse: f64,
}

/// Runs the sweep of a window-denoiser config and pairs each iteration's
/// mean empirical MSE with state evolution for the same rate and noise.
pub fn run_se_comparison(cfg: &ExperimentConfig) -> Result<(ExperimentResult, Vec<SeRow>)> {
    let model = cfg
        .denoiser
        .window_model(&cfg.source)?
        .ok_or_else(|| Error::invalid("state-evolution comparison needs a window denoiser"))?;
    let result = run_experiment(cfg)?;
    let se_seed = derive_seed(cfg.seed, &[3]);
    let mut rows = Vec::new();
    for (cell, chunk) in result.cells.iter().zip(result.trials.chunks(cfg.trials)) {
        let se = se_run_window(&model, cell.rate, chunk[0].sigma_z_sq, cfg.t_max, cfg.se_samples, se_seed)?;
        let ok: Vec<&_> = chunk.iter().filter(|t| t.status == TrialStatus::Ok).collect();
        for t in 0..=cfg.t_max {
            let mses: Vec<f64> = ok.iter().filter_map(|tr| tr.trace.rows.get(t).and_then(|r| r.mse)).collect();
            let (mean, stderr) = mean_stderr(&mses);
            let Some(mean) = mean else { break };
            rows.push(SeRow {
                rate: cell.rate,
                m: cell.m,
                snr_db: cell.snr_db,
                t,
                trials: mses.len(),
                empirical_mse_mean: mean,
                empirical_mse_stderr: stderr,
                se_predicted_mse: se.iterate_mse(t),
            });
        }
    }
    Ok((result, rows))
}

pub fn write_se_comparison(rows: &[SeRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = schema_writer(path, SE_COMPARE_SCHEMA)?;
    w.write_record([
        "rate", "m", "snr_db", "t", "trials", "empirical_mse_mean", "empirical_mse_stderr", "se_predicted_mse",
    ])?;
    for r in rows {
        w.write_record([
            r.rate.to_string(),
            r.m.to_string(),
            r.snr_db.to_string(),
            r.t.to_string(),
            r.trials.to_string(),
            r.empirical_mse_mean.to_string(),
            opt_cell(r.empirical_mse_stderr),
            r.se_predicted_mse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
