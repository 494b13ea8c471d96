//! State evolution: the scalar recursion
//! `σ²_{t+1} = σ_z² + MSE(σ²_t) / R`, started at `σ²_0 = σ_z² + E[X²]/R`,
//! that predicts the effective noise of AMP's pseudo-data.

use std::path::Path;

use crate::csvio::schema_writer;
use crate::error::{Error, Result};
use crate::markov::WindowModel;

pub const SE_SCHEMA: &str = "ampud.se-trace.v1";

/// The recursion stops once successive variances differ by less than this.
pub const FIXED_POINT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SeTrace {
    /// σ²_t for t = 0, 1, ...
    pub sigma_sq: Vec<f64>,
    /// `mse_fn(σ²_t)`: the predicted MSE of the estimate produced from σ²_t.
    pub predicted_mse: Vec<f64>,
    /// First t with `|σ²_t - σ²_{t-1}| < FIXED_POINT_TOL`, if reached.
    pub fixed_point: Option<usize>,
    second_moment: f64,
}

impl SeTrace {
    /// Predicted MSE of the AMP iterate `x^t`: `E[X²]` for the zero start,
    /// then `predicted_mse[t-1]`. Past the end of the trace the last value
    /// (the fixed point) is repeated.
    pub fn iterate_mse(&self, t: usize) -> f64 {
        if t == 0 {
            self.second_moment
        } else {
            let i = (t - 1).min(self.predicted_mse.len() - 1);
            self.predicted_mse[i]
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = schema_writer(path, SE_SCHEMA)?;
        w.write_record(["t", "sigma_sq", "predicted_mse"])?;
        for (t, (s, m)) in self.sigma_sq.iter().zip(&self.predicted_mse).enumerate() {
            w.write_record([t.to_string(), s.to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn se_step(mse_fn: impl Fn(f64) -> f64, sigma_sq_t: f64, sigma_z_sq: f64, rate: f64) -> f64 {
    sigma_z_sq + mse_fn(sigma_sq_t) / rate
}

/// Iterate [`se_step`] up to `t_max` times or until the fixed point.
pub fn se_run(
    mse_fn: impl Fn(f64) -> f64,
    second_moment: f64,
    rate: f64,
    sigma_z_sq: f64,
    t_max: usize,
) -> Result<SeTrace> {
    if !(rate > 0.0) {
        return Err(Error::invalid(format!("measurement rate must be positive, got {rate}")));
    }
    if t_max == 0 {
        return Err(Error::invalid("state evolution needs at least one iteration"));
    }
    if !(sigma_z_sq >= 0.0) || !(second_moment >= 0.0) {
        return Err(Error::invalid("noise variance and second moment must be nonnegative"));
    }
    let mut sigma_sq = vec![sigma_z_sq + second_moment / rate];
    let mut predicted_mse = Vec::new();
    let mut fixed_point = None;
    for t in 0..t_max {
        let mse = mse_fn(sigma_sq[t]);
        predicted_mse.push(mse);
        let next = sigma_z_sq + mse / rate;
        sigma_sq.push(next);
        if (next - sigma_sq[t]).abs() < FIXED_POINT_TOL {
            fixed_point = Some(t + 1);
            break;
        }
    }
    predicted_mse.push(mse_fn(*sigma_sq.last().expect("nonempty")));
    Ok(SeTrace { sigma_sq, predicted_mse, fixed_point, second_moment })
}

/// State evolution for a sliding-window denoiser. Every MSE evaluation uses
/// the same Monte-Carlo seed, so the predicted map is a deterministic
/// function of σ².
pub fn se_run_window(
    model: &WindowModel,
    rate: f64,
    sigma_z_sq: f64,
    t_max: usize,
    n_mc: usize,
    seed: u64,
) -> Result<SeTrace> {
    se_run(
        |s| model.window_mse(s, n_mc, seed),
        model.spec().second_moment(),
        rate,
        sigma_z_sq,
        t_max,
    )
}
