use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::Denoiser;
use crate::csvio::schema_writer;
use crate::error::{Error, Result};
use crate::model::{mse, SignalSource};
use crate::rng::{self, derive_seed};
use crate::universal::{UniversalConfig, UniversalDenoiser};

pub const TUNE_SCHEMA: &str = "ampud.tune-beta.v1";

fn default_sources() -> Vec<SignalSource> {
    vec![SignalSource::Mconst { p01: 3.0 / 970.0, p10: 0.1 }, SignalSource::Munif { p01: 3.0 / 970.0, p10: 0.1 }]
}
fn default_n() -> usize {
    5000
}
fn default_snr() -> Vec<f64> {
    vec![-10.0, -5.0, 0.0]
}
fn default_b1() -> Vec<f64> {
    vec![0.0, 0.05, 0.1, 0.2, 0.4]
}
fn default_b2() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.5, 0.7]
}
fn default_trials() -> usize {
    3
}

/// Grid search for the decay-rate coefficients on scalar-channel denoising
/// (`q = x + v`, SNR = E[x²]/σ_v²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    #[serde(default = "default_sources")]
    pub sources: Vec<SignalSource>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_snr")]
    pub snr_db: Vec<f64>,
    #[serde(default = "default_b1")]
    pub b1: Vec<f64>,
    #[serde(default = "default_b2")]
    pub b2: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Replaced by `--seed` on the command line.
    #[serde(default)]
    pub seed: u64,
    /// Everything except `b1`/`b2`, which come from the grid.
    #[serde(default)]
    pub universal: UniversalConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl TuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.snr_db.is_empty() || self.b1.is_empty() || self.b2.is_empty() {
            return Err(Error::invalid("sources, snr_db, b1 and b2 must be nonempty"));
        }
        if self.trials == 0 || self.n <= 2 * self.universal.k {
            return Err(Error::invalid("need trials >= 1 and n > 2k"));
        }
        for s in &self.sources {
            s.validate()?;
        }
        self.universal.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub b1: f64,
    pub b2: f64,
    /// MSE / E[x²], averaged over sources, SNRs and trials.
    pub mean_normalized_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub rows: Vec<TuneRow>,
    pub best: TuneRow,
}

pub fn run_tune_beta(cfg: &TuneConfig) -> Result<TuneResult> {
    cfg.validate()?;
    let mut cases = Vec::new();
    for (si, src) in cfg.sources.iter().enumerate() {
        for &snr in &cfg.snr_db {
            for trial in 0..cfg.trials {
                let seed = derive_seed(cfg.seed, &[si as u64, trial as u64]);
                let x = src.generate(cfg.n, seed)?;
                let power = src.second_moment();
                let sv = power / 10f64.powf(snr / 10.0);
                let mut r = rng::rng(derive_seed(seed, &[1]));
                let q: Vec<f64> = x
                    .iter()
                    .map(|v| {
                        let g: f64 = StandardNormal.sample(&mut r);
                        v + sv.sqrt() * g
                    })
                    .collect();
                cases.push((x, q, sv, power));
            }
        }
    }
    let grid: Vec<(f64, f64)> = cfg.b1.iter().flat_map(|&a| cfg.b2.iter().map(move |&b| (a, b))).collect();
    let rows: Vec<TuneRow> = grid
        .par_iter()
        .map(|&(b1, b2)| {
            let d = UniversalDenoiser::new(UniversalConfig { b1, b2, ..cfg.universal.clone() });
            let mut total = 0.0;
            for (x, q, sv, power) in &cases {
                total += mse(x, &d.denoise(q, *sv)?.x_hat)? / power;
            }
            Ok(TuneRow { b1, b2, mean_normalized_mse: total / cases.len() as f64 })
        })
        .collect::<Result<_>>()?;
    let best = rows
        .iter()
        .min_by(|a, b| a.mean_normalized_mse.total_cmp(&b.mean_normalized_mse))
        .cloned()
        .expect("nonempty grid");
    Ok(TuneResult { rows, best })
}

/// Writes `tune_beta.csv` and `tune_beta.json` into `dir`.
pub fn write_tune_beta(result: &TuneResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut w = schema_writer(dir.join("tune_beta.csv"), TUNE_SCHEMA)?;
    w.write_record(["b1", "b2", "mean_normalized_mse"])?;
    for r in &result.rows {
        w.write_record([r.b1.to_string(), r.b2.to_string(), r.mean_normalized_mse.to_string()])?;
    }
    w.flush()?;
    let doc = serde_json::json!({ "schema": TUNE_SCHEMA, "best": result.best, "rows": result.rows });
    fs::write(dir.join("tune_beta.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}
