//! Approximate message passing with a pluggable denoiser.
//!
//! Starting from `x⁰ = 0`, `r⁰ = y`, each step forms the pseudo-data
//! `q = Aᵀr + x`, denoises it at the estimated noise level `‖r‖²/M`, damps
//! the estimate and refreshes the Onsager-corrected residual
//!
//! ```text
//! x⁺ = λ η(q) + (1-λ) x
//! r⁺ = y - A x⁺ + (N/M) ⟨η'(q)⟩ r
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio::{opt_cell, schema_writer};
use crate::error::{check_len, Error, Result};
use crate::model::{mse, norm_sq, LinearSystem};

pub const TRACE_SCHEMA: &str = "ampud.amp-trace.v1";

/// Output of a denoiser applied to a whole pseudo-data vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub x_hat: Vec<f64>,
    /// Mean over coordinates of `∂η(q)_j / ∂q_j`.
    pub mean_deriv: f64,
}

/// Denoiser contract used by the AMP engine.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        (**self).denoise(q, sigma_sq)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        (**self).denoise(q, sigma_sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmpConfig {
    pub t_max: usize,
    /// Damping weight in (0, 1]; 1 disables damping.
    pub lambda: f64,
    /// Also scale the Onsager coefficient by `lambda`. Off by default: the
    /// residual uses the undamped denoiser divergence.
    #[serde(default)]
    pub damp_onsager: bool,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self { t_max: 100, lambda: 0.1, damp_onsager: false }
    }
}

impl AmpConfig {
    pub fn undamped(t_max: usize) -> Self {
        Self { t_max, lambda: 1.0, damp_onsager: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid(format!("damping lambda must lie in (0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub t: usize,
    pub sigma_hat_sq: f64,
    /// Onsager coefficient `(N/M)⟨η'⟩` that entered the current residual;
    /// zero at `t = 0`.
    pub onsager: f64,
}

impl AmpState {
    pub fn initial(sys: &LinearSystem) -> Self {
        let r = sys.y().to_vec();
        let sigma_hat_sq = estimate_noise_var(&r, sys.m());
        Self { x: vec![0.0; sys.n()], r, t: 0, sigma_hat_sq, onsager: 0.0 }
    }

    fn check(&self, sys: &LinearSystem) -> Result<()> {
        check_len("AMP estimate", sys.n(), self.x.len())?;
        check_len("AMP residual", sys.m(), self.r.len())
    }
}

/// `‖r‖² / M`
pub fn estimate_noise_var(r: &[f64], m: usize) -> f64 {
    debug_assert!(m >= 1);
    norm_sq(r) / m as f64
}

/// `q = Aᵀ r + x`
pub fn pseudo_data(sys: &LinearSystem, state: &AmpState) -> Result<Vec<f64>> {
    state.check(sys)?;
    let mut q = sys.a().mul_t_vec(&state.r)?;
    for (qj, xj) in q.iter_mut().zip(&state.x) {
        *qj += xj;
    }
    Ok(q)
}

pub fn amp_step(
    sys: &LinearSystem,
    state: &AmpState,
    denoiser: &dyn Denoiser,
    cfg: &AmpConfig,
) -> Result<AmpState> {
    cfg.validate()?;
    let q = pseudo_data(sys, state)?;
    let out = denoiser.denoise(&q, state.sigma_hat_sq)?;
    check_len("denoiser output", sys.n(), out.x_hat.len())?;
    if !out.mean_deriv.is_finite() || out.x_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            iteration: state.t,
            reason: "denoiser returned non-finite values".into(),
        });
    }

    let lambda = cfg.lambda;
    let x: Vec<f64> = out
        .x_hat
        .iter()
        .zip(&state.x)
        .map(|(eta, prev)| lambda * eta + (1.0 - lambda) * prev)
        .collect();

    let mut onsager = out.mean_deriv / sys.rate();
    if cfg.damp_onsager {
        onsager *= lambda;
    }
    let ax = sys.a().mul_vec(&x)?;
    let r: Vec<f64> = sys
        .y()
        .iter()
        .zip(&ax)
        .zip(&state.r)
        .map(|((y, ax), r_prev)| y - ax + onsager * r_prev)
        .collect();
    let sigma_hat_sq = estimate_noise_var(&r, sys.m());
    if !sigma_hat_sq.is_finite() {
        return Err(Error::Diverged {
            iteration: state.t + 1,
            reason: "residual is non-finite".into(),
        });
    }
    Ok(AmpState { x, r, t: state.t + 1, sigma_hat_sq, onsager })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub sigma_hat_sq: f64,
    pub mse: Option<f64>,
}

/// Per-iteration record of a run, starting at `t = 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn sigma_hat_sq(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sigma_hat_sq).collect()
    }

    pub fn mse(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.mse).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = schema_writer(path, TRACE_SCHEMA)?;
        w.write_record(["t", "sigma_hat_sq", "mse_if_known"])?;
        for row in &self.rows {
            w.write_record([row.t.to_string(), row.sigma_hat_sq.to_string(), opt_cell(row.mse)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AmpRun {
    pub state: AmpState,
    pub trace: Trace,
}

/// A run that stopped early; `trace` holds every iteration completed before
/// the failure.
#[derive(Debug)]
pub struct AmpFailure {
    pub error: Error,
    pub trace: Trace,
}

impl std::fmt::Display for AmpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.error, self.trace.rows.len())
    }
}

impl std::error::Error for AmpFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Consecutive iterations over which σ̂² growth is watched.
const DIVERGENCE_WINDOW: usize = 5;
/// Growth factor over [`DIVERGENCE_WINDOW`] iterations that aborts a run.
const DIVERGENCE_GROWTH: f64 = 10.0;

fn blowing_up(history: &[f64]) -> bool {
    if history.len() <= DIVERGENCE_WINDOW {
        return false;
    }
    let tail = &history[history.len() - DIVERGENCE_WINDOW - 1..];
    tail.windows(2).all(|w| w[1] > w[0]) && tail[DIVERGENCE_WINDOW] > DIVERGENCE_GROWTH * tail[0]
}

/// Run `cfg.t_max` AMP iterations from the zero estimate. When `truth` is
/// given the trace also records the MSE of every iterate.
pub fn run(
    sys: &LinearSystem,
    denoiser: &dyn Denoiser,
    cfg: &AmpConfig,
    truth: Option<&[f64]>,
) -> std::result::Result<AmpRun, AmpFailure> {
    run_with(sys, denoiser, cfg, truth, |_| {})
}

/// [`run`] with a callback invoked on every state, including the initial one.
pub fn run_with(
    sys: &LinearSystem,
    denoiser: &dyn Denoiser,
    cfg: &AmpConfig,
    truth: Option<&[f64]>,
    mut on_state: impl FnMut(&AmpState),
) -> std::result::Result<AmpRun, AmpFailure> {
    let mut trace = Trace::default();
    let fail = |error, trace| Err(AmpFailure { error, trace });
    if cfg.t_max == 0 {
        return fail(Error::invalid("t_max must be at least 1"), trace);
    }
    if let Err(e) = cfg.validate() {
        return fail(e, trace);
    }
    if let Some(x) = truth {
        if let Err(e) = check_len("ground truth", sys.n(), x.len()) {
            return fail(e, trace);
        }
    }
    let record = |state: &AmpState, trace: &mut Trace| {
        let err = truth.map(|x| mse(x, &state.x).expect("lengths checked"));
        trace.rows.push(TraceRow { t: state.t, sigma_hat_sq: state.sigma_hat_sq, mse: err });
    };

    let mut state = AmpState::initial(sys);
    record(&state, &mut trace);
    on_state(&state);
    let mut history = vec![state.sigma_hat_sq];
    for _ in 0..cfg.t_max {
        state = match amp_step(sys, &state, denoiser, cfg) {
            Ok(s) => s,
            Err(e) => return fail(e, trace),
        };
        record(&state, &mut trace);
        on_state(&state);
        history.push(state.sigma_hat_sq);
        if blowing_up(&history) {
            let error = Error::Diverged {
                iteration: state.t,
                reason: format!(
                    "estimated noise variance grew more than {DIVERGENCE_GROWTH}x over {DIVERGENCE_WINDOW} iterations"
                ),
            };
            return fail(error, trace);
        }
    }
    Ok(AmpRun { state, trace })
}
