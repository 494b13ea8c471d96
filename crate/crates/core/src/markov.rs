//! Bayesian sliding-window denoisers for the MConst and M4 Markov sources.
//!
//! For a window `q_{j-k..j+k}` observed through AWGN of variance σ², the
//! denoiser returns the posterior mean of the center symbol,
//!
//! ```text
//! η(q) = Σ_s s p(x_j = s, q) / p(q),
//! p(x_j = s, q) = Σ_{windows x with x_j = s} N(q; x, σ² I) p(x),
//! ```
//!
//! by exact enumeration of all `|alphabet|^(2k+1)` windows. Its derivative
//! along the center observation is `Var(x_j | q) / σ²`. For MConst this is
//! `p(0,q) p(1,q) / (σ p(q))²`; for the ±1 M4 source it is
//! `4 p(-1,q) p(+1,q) / (σ p(q))²`.
//!
//! Near the ends of the sequence the window is truncated and the prior is the
//! stationary marginal of the shorter window, so every index gets an exact
//! Bayes estimate.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::amp::{Denoised, Denoiser};
use crate::error::{check_len, Error, Result};
use crate::model::{m4_transition, MarkovKind, MarkovSourceSpec};
use crate::rng;

/// Above this many windows per table construction is refused.
const MAX_WINDOWS: usize = 1 << 16;

/// Default Monte-Carlo sample count for [`WindowModel::window_mse`].
pub const DEFAULT_MSE_SAMPLES: usize = 100_000;

#[derive(Debug, Clone)]
struct WindowTable {
    len: usize,
    center: usize,
    /// `windows × len`, row-major.
    values: Vec<f64>,
    center_symbol: Vec<usize>,
    prior: Vec<f64>,
    log_prior: Vec<f64>,
}

impl WindowTable {
    fn build(spec: &MarkovSourceSpec, alphabet: &[f64], len: usize, center: usize) -> Self {
        let a = alphabet.len();
        let total = a.pow(len as u32);
        let mut table = WindowTable {
            len,
            center,
            values: Vec::new(),
            center_symbol: Vec::new(),
            prior: Vec::new(),
            log_prior: Vec::new(),
        };
        let mut idx = vec![0usize; len];
        for code in 0..total {
            let mut c = code;
            for slot in idx.iter_mut().rev() {
                *slot = c % a;
                c /= a;
            }
            let window: Vec<f64> = idx.iter().map(|&i| alphabet[i]).collect();
            let p = window_prior(spec, &idx, &window);
            if p > 0.0 {
                table.values.extend_from_slice(&window);
                table.center_symbol.push(idx[center]);
                table.prior.push(p);
                table.log_prior.push(p.ln());
            }
        }
        table
    }

    fn n_windows(&self) -> usize {
        self.prior.len()
    }

    fn window(&self, w: usize) -> &[f64] {
        &self.values[w * self.len..(w + 1) * self.len]
    }

    /// Unnormalized log-weights `log p(x) - ‖q - x‖² / 2σ²` and their max.
    fn log_weights(&self, q: &[f64], sigma_sq: f64, out: &mut Vec<f64>) -> f64 {
        out.clear();
        let inv = 0.5 / sigma_sq;
        let mut max = f64::NEG_INFINITY;
        for w in 0..self.n_windows() {
            let d: f64 = self.window(w).iter().zip(q).map(|(x, q)| (q - x) * (q - x)).sum();
            let l = self.log_prior[w] - d * inv;
            max = max.max(l);
            out.push(l);
        }
        max
    }

    /// Posterior mass of each alphabet symbol at the center.
    fn center_posterior(&self, q: &[f64], sigma_sq: f64, n_symbols: usize) -> Vec<f64> {
        debug_assert!(self.center < self.len && q.len() == self.len);
        let mut lw = Vec::with_capacity(self.n_windows());
        let max = self.log_weights(q, sigma_sq, &mut lw);
        let mut mass = vec![0.0; n_symbols];
        for (w, l) in lw.iter().enumerate() {
            mass[self.center_symbol[w]] += (l - max).exp();
        }
        let z: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= z);
        mass
    }

    /// `ln Σ_{w in subset} p(x_w) N(q; x_w, σ² I)`
    fn log_joint(&self, q: &[f64], sigma_sq: f64, center: Option<usize>) -> f64 {
        let mut lw = Vec::with_capacity(self.n_windows());
        self.log_weights(q, sigma_sq, &mut lw);
        let keep = |w: usize| center.is_none_or(|s| self.center_symbol[w] == s);
        let max = (0..lw.len()).filter(|&w| keep(w)).map(|w| lw[w]).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = (0..lw.len()).filter(|&w| keep(w)).map(|w| (lw[w] - max).exp()).sum();
        let norm = -0.5 * self.len as f64 * (2.0 * std::f64::consts::PI * sigma_sq).ln();
        max + sum.ln() + norm
    }
}

fn window_prior(spec: &MarkovSourceSpec, idx: &[usize], values: &[f64]) -> f64 {
    match spec.kind {
        MarkovKind::M4 => {
            let e = spec.switch_error;
            match values.len() {
                0 => 1.0,
                1 => 0.5,
                _ => {
                    0.25 * values
                        .windows(3)
                        .map(|w| m4_transition(w[0], w[1], w[2], e))
                        .product::<f64>()
                }
            }
        }
        _ => {
            let (p01, p10) = (spec.p01, spec.p10);
            let stationary = [p10 / (p01 + p10), p01 / (p01 + p10)];
            let trans = [[1.0 - p01, p01], [p10, 1.0 - p10]];
            stationary[idx[0]] * idx.windows(2).map(|w| trans[w[0]][w[1]]).product::<f64>()
        }
    }
}

/// Precomputed window priors for a Markov source and half-width `k`.
#[derive(Debug, Clone)]
pub struct WindowModel {
    spec: MarkovSourceSpec,
    k: usize,
    alphabet: Vec<f64>,
    interior: WindowTable,
    /// `left[j]`: window `0..=j+k` with center `j`, for `j < k`.
    left: Vec<WindowTable>,
    /// `right[r]`: window with `k` left and `r < k` right neighbours.
    right: Vec<WindowTable>,
}

impl WindowModel {
    pub fn new(spec: MarkovSourceSpec, k: usize) -> Result<Self> {
        spec.validate()?;
        let alphabet = match spec.kind {
            MarkovKind::MConst => vec![0.0, 1.0],
            MarkovKind::M4 => vec![-1.0, 1.0],
            other => {
                return Err(Error::invalid(format!(
                    "window denoisers exist for MConst and M4 sources only, not {other:?}"
                )))
            }
        };
        let len = 2 * k + 1;
        if (len as u32) >= usize::BITS || alphabet.len().checked_pow(len as u32).is_none_or(|n| n > MAX_WINDOWS) {
            return Err(Error::invalid(format!("window half-width {k} is too large to enumerate")));
        }
        let interior = WindowTable::build(&spec, &alphabet, len, k);
        let left = (0..k).map(|j| WindowTable::build(&spec, &alphabet, j + k + 1, j)).collect();
        let right = (0..k).map(|r| WindowTable::build(&spec, &alphabet, k + r + 1, k)).collect();
        Ok(Self { spec, k, alphabet, interior, left, right })
    }

    pub fn spec(&self) -> &MarkovSourceSpec {
        &self.spec
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn window_len(&self) -> usize {
        2 * self.k + 1
    }

    pub fn alphabet(&self) -> &[f64] {
        &self.alphabet
    }

    /// `(window values, prior)` for every full-length window with nonzero prior.
    pub fn window_priors(&self) -> impl Iterator<Item = (&[f64], f64)> {
        (0..self.interior.n_windows()).map(|w| (self.interior.window(w), self.interior.prior[w]))
    }

    fn check_window(&self, q_win: &[f64], sigma_v_sq: f64) -> Result<()> {
        check_len("denoising window", self.window_len(), q_win.len())?;
        if !(sigma_v_sq > 0.0) {
            return Err(Error::invalid(format!("noise variance must be positive, got {sigma_v_sq}")));
        }
        Ok(())
    }

    fn symbol_index(&self, value: f64) -> Result<usize> {
        self.alphabet
            .iter()
            .position(|&a| a == value)
            .ok_or_else(|| Error::invalid(format!("{value} is not in the source alphabet {:?}", self.alphabet)))
    }

    /// `p(x_j = center_value, q_win)`.
    pub fn joint_density(&self, q_win: &[f64], sigma_v_sq: f64, center_value: f64) -> Result<f64> {
        self.check_window(q_win, sigma_v_sq)?;
        let s = self.symbol_index(center_value)?;
        Ok(self.interior.log_joint(q_win, sigma_v_sq, Some(s)).exp())
    }

    /// `p(q_win)`, the window density summed over all center values.
    pub fn density(&self, q_win: &[f64], sigma_v_sq: f64) -> Result<f64> {
        self.check_window(q_win, sigma_v_sq)?;
        Ok(self.interior.log_joint(q_win, sigma_v_sq, None).exp())
    }

    fn moments(&self, table: &WindowTable, q: &[f64], sigma_sq: f64) -> (f64, f64) {
        let post = table.center_posterior(q, sigma_sq, self.alphabet.len());
        let mean: f64 = post.iter().zip(&self.alphabet).map(|(p, a)| p * a).sum();
        let var: f64 = post.iter().zip(&self.alphabet).map(|(p, a)| p * (a - mean) * (a - mean)).sum();
        (mean, var)
    }

    /// Posterior mean of the center symbol: η_MConst or η_M4 depending on
    /// the source.
    pub fn eta(&self, q_win: &[f64], sigma_v_sq: f64) -> Result<f64> {
        self.check_window(q_win, sigma_v_sq)?;
        Ok(self.moments(&self.interior, q_win, sigma_v_sq).0)
    }

    /// `∂η/∂q_center = Var(x_j | q_win) / σ²`.
    pub fn eta_deriv(&self, q_win: &[f64], sigma_v_sq: f64) -> Result<f64> {
        self.check_window(q_win, sigma_v_sq)?;
        Ok(self.moments(&self.interior, q_win, sigma_v_sq).1 / sigma_v_sq)
    }

    /// Posterior variance of the center symbol.
    pub fn posterior_var(&self, q_win: &[f64], sigma_v_sq: f64) -> Result<f64> {
        self.check_window(q_win, sigma_v_sq)?;
        Ok(self.moments(&self.interior, q_win, sigma_v_sq).1)
    }

    /// Slide the window over `q`, truncating it near both ends.
    pub fn denoise_sequence(&self, q: &[f64], sigma_v_sq: f64) -> Result<Denoised> {
        let n = q.len();
        let k = self.k;
        if n <= 2 * k {
            return Err(Error::invalid(format!(
                "sequence of length {n} is too short for a window of length {}",
                2 * k + 1
            )));
        }
        if !(sigma_v_sq > 0.0) {
            return Err(Error::invalid(format!("noise variance must be positive, got {sigma_v_sq}")));
        }
        let mut x_hat = Vec::with_capacity(n);
        let mut deriv_sum = 0.0;
        for j in 0..n {
            let (table, slice) = if j < k {
                (&self.left[j], &q[..=j + k])
            } else if j + k >= n {
                (&self.right[n - 1 - j], &q[j - k..])
            } else {
                (&self.interior, &q[j - k..=j + k])
            };
            debug_assert_eq!(slice.len(), table.len);
            let (mean, var) = self.moments(table, slice, sigma_v_sq);
            x_hat.push(mean);
            deriv_sum += var / sigma_v_sq;
        }
        Ok(Denoised { x_hat, mean_deriv: deriv_sum / n as f64 })
    }

    /// Denoising MSE `E[(x_j - η(q))²]` at noise level σ².
    ///
    /// For `k = 0` this is a one-dimensional integral, evaluated by composite
    /// Simpson quadrature. Otherwise it is a Monte-Carlo average over windows
    /// drawn from the prior with fresh noise; each sample contributes the
    /// posterior variance `Var(x_j | q)`, whose expectation is the MSE and
    /// whose spread is smaller than that of the raw squared error.
    pub fn window_mse(&self, sigma_v_sq: f64, n_mc: usize, seed: u64) -> f64 {
        if sigma_v_sq <= 0.0 {
            return 0.0;
        }
        if self.k == 0 {
            return self.scalar_mse_quadrature(sigma_v_sq);
        }
        let table = &self.interior;
        let cdf: Vec<f64> = table
            .prior
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().expect("nonempty table");
        let sd = sigma_v_sq.sqrt();
        let mut rng = rng::rng(seed);
        let mut q = vec![0.0; table.len];
        let mut acc = 0.0;
        for _ in 0..n_mc.max(1) {
            let u = rng.random::<f64>() * total;
            let w = cdf.partition_point(|&c| c <= u).min(table.n_windows() - 1);
            for (qi, xi) in q.iter_mut().zip(table.window(w)) {
                let g: f64 = StandardNormal.sample(&mut rng);
                *qi = xi + sd * g;
            }
            acc += self.moments(table, &q, sigma_v_sq).1;
        }
        acc / n_mc.max(1) as f64
    }

    fn scalar_mse_quadrature(&self, sigma_sq: f64) -> f64 {
        let sd = sigma_sq.sqrt();
        let table = &self.interior;
        let intervals = 4000;
        let mut total = 0.0;
        for w in 0..table.n_windows() {
            let a = table.window(w)[0];
            let (lo, hi) = (a - 12.0 * sd, a + 12.0 * sd);
            let h = (hi - lo) / intervals as f64;
            let integrand = |q: f64| {
                let z = (q - a) / sd;
                let density = (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let (mean, _) = self.moments(table, &[q], sigma_sq);
                density * (a - mean) * (a - mean)
            };
            total += table.prior[w] * simpson(integrand, lo, h, intervals);
        }
        total
    }
}

pub(crate) fn simpson(f: impl Fn(f64) -> f64, lo: f64, h: f64, intervals: usize) -> f64 {
    debug_assert!(intervals.is_multiple_of(2));
    let mut s = f(lo) + f(lo + h * intervals as f64);
    for i in 1..intervals {
        s += f(lo + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

impl Denoiser for WindowModel {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        self.denoise_sequence(q, sigma_sq)
    }
}
