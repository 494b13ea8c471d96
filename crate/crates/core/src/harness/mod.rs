//! Experiment orchestration: generate signal, matrix and noise, run AMP with
//! a chosen denoiser, and tabulate SDR/MSE over grids of rates and SNRs.
//!
//! Output files carry a schema version: CSV tables start with a
//! `# schema: ...` line, JSON documents have a `schema` field.

mod experiment;
mod tune;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::amp::{AmpConfig, Denoiser};
use crate::bayes::SparseLaplaceBayes;
use crate::error::{Error, Result};
use crate::gm::EmConfig;
use crate::iid::GmIidDenoiser;
use crate::markov::{WindowModel, DEFAULT_MSE_SAMPLES};
use crate::model::{
    gen_matrix, measure, measurements_for_rate, noise_var_for_snr, LinearSystem, MarkovKind, Matrix,
    SignalSource,
};
use crate::rng::derive_seed;
use crate::universal::{UniversalConfig, UniversalDenoiser};

pub use experiment::{
    run_experiment, run_se_comparison, write_experiment, write_se_comparison, CellSummary, ExperimentResult,
    SeRow, TrialResult, TrialStatus, ITERATIONS_SCHEMA, SE_COMPARE_SCHEMA, SUMMARY_SCHEMA, TRIALS_SCHEMA,
};
pub use tune::{run_tune_beta, write_tune_beta, TuneConfig, TuneResult, TuneRow, TUNE_SCHEMA};

/// Denoiser selection in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DenoiserSpec {
    /// Bayesian window of `2k+1` symbols for an MConst source.
    WindowMconst { k: usize },
    /// Bayesian window of `2k+1` symbols for an M4 source.
    WindowM4 { k: usize },
    GmIid {
        #[serde(default)]
        em: EmConfig,
    },
    Universal(UniversalConfig),
    /// True-prior conditional expectation for the sparse Laplace source.
    SparseLaplaceBayes(SparseLaplaceBayes),
}

impl DenoiserSpec {
    pub fn build(&self, source: &SignalSource) -> Result<Box<dyn Denoiser>> {
        let window = |k: usize, want: MarkovKind| -> Result<Box<dyn Denoiser>> {
            match source.markov_spec() {
                Some(spec) if spec.kind == want => Ok(Box::new(WindowModel::new(spec, k)?)),
                _ => Err(Error::invalid(format!("window denoiser for {want:?} needs a matching source, got {source:?}"))),
            }
        };
        match self {
            DenoiserSpec::WindowMconst { k } => window(*k, MarkovKind::MConst),
            DenoiserSpec::WindowM4 { k } => window(*k, MarkovKind::M4),
            DenoiserSpec::GmIid { em } => {
                em.validate()?;
                Ok(Box::new(GmIidDenoiser { em: em.clone() }))
            }
            DenoiserSpec::Universal(cfg) => {
                cfg.validate()?;
                Ok(Box::new(UniversalDenoiser::new(cfg.clone())))
            }
            DenoiserSpec::SparseLaplaceBayes(p) => {
                p.validate()?;
                Ok(Box::new(*p))
            }
        }
    }

    /// The window model behind a window denoiser.
    pub fn window_model(&self, source: &SignalSource) -> Result<Option<WindowModel>> {
        let k = match self {
            DenoiserSpec::WindowMconst { k } | DenoiserSpec::WindowM4 { k } => *k,
            _ => return Ok(None),
        };
        let spec = source.markov_spec().ok_or_else(|| Error::invalid("window denoiser needs a Markov source"))?;
        Ok(Some(WindowModel::new(spec, k)?))
    }
}

fn default_t_max() -> usize {
    100
}
fn default_lambda() -> f64 {
    0.1
}
fn default_se_samples() -> usize {
    DEFAULT_MSE_SAMPLES
}

/// One sweep: every (measurement count, SNR, trial) combination is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: SignalSource,
    pub n: usize,
    /// Explicit measurement count; give either this or `rates`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Measurement rates `M/N`.
    #[serde(default)]
    pub rates: Vec<f64>,
    pub snr_db: Vec<f64>,
    pub denoiser: DenoiserSpec,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub damp_onsager: bool,
    pub trials: usize,
    /// Replaced by `--seed` on the command line.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Monte-Carlo samples per state-evolution MSE evaluation.
    #[serde(default = "default_se_samples")]
    pub se_samples: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if self.n == 0 || self.trials == 0 {
            return Err(Error::invalid("n and trials must be at least 1"));
        }
        match (self.m, self.rates.is_empty()) {
            (Some(_), false) => return Err(Error::invalid("give either m or rates, not both")),
            (None, true) => return Err(Error::invalid("give m or a nonempty rates list")),
            (Some(0), _) => return Err(Error::invalid("m must be at least 1")),
            _ => {}
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::invalid(format!("rates must be positive and finite, got {r}")));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("snr_db must be a nonempty list of finite values"));
        }
        if self.se_samples == 0 {
            return Err(Error::invalid("se_samples must be at least 1"));
        }
        self.amp_config().validate()?;
        if self.t_max == 0 {
            return Err(Error::invalid("t_max must be at least 1"));
        }
        self.denoiser.build(&self.source)?;
        if let DenoiserSpec::Universal(u) = &self.denoiser {
            if self.n <= 2 * u.k {
                return Err(Error::invalid(format!("universal denoiser needs n > 2k = {}", 2 * u.k)));
            }
        }
        Ok(())
    }

    pub fn amp_config(&self) -> AmpConfig {
        AmpConfig { t_max: self.t_max, lambda: self.lambda, damp_onsager: self.damp_onsager }
    }

    /// Measurement counts of the sweep, in configuration order.
    pub fn measurement_counts(&self) -> Vec<usize> {
        match self.m {
            Some(m) => vec![m],
            None => self.rates.iter().map(|&r| measurements_for_rate(self.n, r)).collect(),
        }
    }
}

/// One generated problem: `y = A x + z`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub x: Vec<f64>,
    pub system: LinearSystem,
}

/// Seeds of one trial. The signal depends only on the trial, the matrix and
/// the noise draw on `(m, trial)`, so cells at different SNRs share all
/// random numbers.
pub fn trial_seeds(seed: u64, m: usize, trial: usize) -> (u64, u64, u64) {
    let (m, t) = (m as u64, trial as u64);
    (derive_seed(seed, &[0, t]), derive_seed(seed, &[1, m, t]), derive_seed(seed, &[2, m, t]))
}

/// Noise variance is set from the source's theoretical second moment.
pub fn generate_instance(source: &SignalSource, n: usize, m: usize, snr_db: f64, seed: u64, trial: usize) -> Result<Instance> {
    let (sx, sa, sz) = trial_seeds(seed, m, trial);
    let x = source.generate(n, sx)?;
    let a: Matrix = gen_matrix(m, n, sa)?;
    let sigma_z_sq = noise_var_for_snr(source.second_moment(), n, m, snr_db);
    let y = measure(&a, &x, sigma_z_sq, sz)?;
    Ok(Instance { x, system: LinearSystem::new(a, y, sigma_z_sq)? })
}

/// Parses either a JSON object or a bare `kind` name such as `gm_iid`.
pub fn parse_tagged<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let text = text.trim();
    if text.starts_with('{') {
        Ok(serde_json::from_str(text)?)
    } else {
        Ok(serde_json::from_value(serde_json::json!({ "kind": text }))?)
    }
}

pub const INSTANCE_SCHEMA: &str = "ampud.instance.v1";

/// `meta.json` of a generated instance directory. Binary files hold
/// little-endian f64; `A.bin` is row-major `m × n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMeta {
    pub schema: String,
    pub source: SignalSource,
    pub n: usize,
    pub m: usize,
    pub snr_db: f64,
    pub sigma_z_sq: f64,
    pub seed: u64,
}

/// Writes `x.bin`, `A.bin`, `y.bin`, `meta.json`, and with `csv` also
/// `x.csv`, `A.csv`, `y.csv`.
pub fn write_instance(dir: impl AsRef<std::path::Path>, meta: &InstanceMeta, inst: &Instance, csv: bool) -> Result<()> {
    use crate::model::io;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    io::write_f64_le(dir.join("x.bin"), &inst.x)?;
    io::write_matrix_le(dir.join("A.bin"), inst.system.a())?;
    io::write_f64_le(dir.join("y.bin"), inst.system.y())?;
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(meta)?)?;
    if csv {
        io::write_vector_csv(dir.join("x.csv"), &inst.x)?;
        io::write_matrix_csv(dir.join("A.csv"), inst.system.a())?;
        io::write_vector_csv(dir.join("y.csv"), inst.system.y())?;
    }
    Ok(())
}

/// Loads an instance directory; the signal is returned when `x.bin` exists.
pub fn read_instance(dir: impl AsRef<std::path::Path>) -> Result<(InstanceMeta, LinearSystem, Option<Vec<f64>>)> {
    use crate::model::io;
    let dir = dir.as_ref();
    let meta: InstanceMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
    if meta.schema != INSTANCE_SCHEMA {
        return Err(Error::invalid(format!("unsupported instance schema {}", meta.schema)));
    }
    let a = io::read_matrix_le(dir.join("A.bin"), meta.m, meta.n)?;
    let y = io::read_f64_le(dir.join("y.bin"))?;
    let sys = LinearSystem::new(a, y, meta.sigma_z_sq)?;
    let x_path = dir.join("x.bin");
    let x = if x_path.exists() {
        let x = io::read_f64_le(x_path)?;
        crate::error::check_len("signal", meta.n, x.len())?;
        Some(x)
    } else {
        None
    };
    Ok((meta, sys, x))
}
