//! Linear measurement model `y = A x + z`, signal generators and metrics.

pub mod io;
mod matrix;
mod metrics;
mod source;

use rand_distr::{Distribution, StandardNormal};

pub use matrix::{gen_matrix, Matrix};
pub(crate) use matrix::norm_sq;
pub use metrics::{mean_square, mse, noise_var_for_snr, sdr_db, snr_db, snr_db_from_moment};
pub use source::{
    gen_m4, gen_sparse_laplace, gen_two_state_markov, MarkovKind, MarkovSourceSpec, SignalSource,
    LAPLACE_UNIT_SCALE, SPARSE_LAPLACE_RATE,
};
pub(crate) use source::m4_transition;

use crate::error::{check_len, Error, Result};
use crate::rng;

/// A compressed-sensing problem instance.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    a: Matrix,
    y: Vec<f64>,
    sigma_z_sq: f64,
}

impl LinearSystem {
    pub fn new(a: Matrix, y: Vec<f64>, sigma_z_sq: f64) -> Result<Self> {
        check_len("measurements", a.rows(), y.len())?;
        if !(sigma_z_sq >= 0.0) {
            return Err(Error::invalid(format!("noise variance must be >= 0, got {sigma_z_sq}")));
        }
        Ok(Self { a, y, sigma_z_sq })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma_z_sq(&self) -> f64 {
        self.sigma_z_sq
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Measurement rate R = M/N.
    pub fn rate(&self) -> f64 {
        self.m() as f64 / self.n() as f64
    }
}

/// `y = A x + z` with `z ~ N(0, sigma_z_sq I)`.
pub fn measure(a: &Matrix, x: &[f64], sigma_z_sq: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma_z_sq >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be >= 0, got {sigma_z_sq}")));
    }
    let mut y = a.mul_vec(x)?;
    if sigma_z_sq > 0.0 {
        let sd = sigma_z_sq.sqrt();
        let mut rng = rng::rng(seed);
        for yi in &mut y {
            let g: f64 = StandardNormal.sample(&mut rng);
            *yi += sd * g;
        }
    }
    Ok(y)
}

/// Number of measurements for rate `rate` at length `n`, at least one.
pub fn measurements_for_rate(n: usize, rate: f64) -> usize {
    ((n as f64 * rate).round() as usize).max(1)
}
