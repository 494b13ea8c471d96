//! Exact conditional-expectation denoiser for the sparse Laplace source
//! `(1-ε) δ(x) + ε Laplace(0, b)` observed in Gaussian noise.
//!
//! Conditioned on the sign of `x`, the Laplace part times the Gaussian
//! likelihood is a normal density truncated to a half line, so the posterior
//! is a three-part mixture: the spike at zero and two truncated normals with
//! locations `q ∓ σ²/b`.

use serde::{Deserialize, Serialize};

use crate::amp::{Denoised, Denoiser};
use crate::error::{Error, Result};
use crate::model::{LAPLACE_UNIT_SCALE, SPARSE_LAPLACE_RATE};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Φ(z)`, accurate far into the lower tail.
pub fn ln_norm_cdf(z: f64) -> f64 {
    if z > -30.0 {
        (0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Inverse Mills ratio `φ(z) / Φ(z)`.
fn mills(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI - ln_norm_cdf(z)).exp()
}

/// Mean and second moment of `N(m, s²)` truncated to `(0, ∞)`.
fn truncated_moments(m: f64, s: f64) -> (f64, f64) {
    let z = m / s;
    let lam = mills(z);
    let mean = m + s * lam;
    let var = s * s * (1.0 - z * lam - lam * lam).max(0.0);
    (mean, var + mean * mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseLaplaceBayes {
    /// Probability of a nonzero entry.
    pub epsilon: f64,
    /// Laplace scale `b`.
    pub scale: f64,
}

impl Default for SparseLaplaceBayes {
    fn default() -> Self {
        Self { epsilon: SPARSE_LAPLACE_RATE, scale: LAPLACE_UNIT_SCALE }
    }
}

impl SparseLaplaceBayes {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) || !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::invalid(format!("invalid sparse Laplace prior {self:?}")));
        }
        Ok(())
    }

    /// Posterior mean and variance of `x` given `q = x + N(0, sigma_sq)`.
    pub fn posterior(&self, q: f64, sigma_sq: f64) -> (f64, f64) {
        let s = sigma_sq.sqrt();
        let a = 1.0 / self.scale;
        let lap = self.epsilon.ln() + (0.5 * a).ln() + 0.5 * a * a * sigma_sq;
        let m_pos = q - a * sigma_sq;
        let m_neg = -q - a * sigma_sq;
        let l_spike = if self.epsilon < 1.0 {
            (1.0 - self.epsilon).ln() - 0.5 * q * q / sigma_sq - 0.5 * sigma_sq.ln() - LN_SQRT_2PI
        } else {
            f64::NEG_INFINITY
        };
        let l_pos = lap - a * q + ln_norm_cdf(m_pos / s);
        let l_neg = lap + a * q + ln_norm_cdf(m_neg / s);
        let max = l_spike.max(l_pos).max(l_neg);
        let (w0, wp, wn) = ((l_spike - max).exp(), (l_pos - max).exp(), (l_neg - max).exp());
        let total = w0 + wp + wn;
        let (e_pos, e2_pos) = truncated_moments(m_pos, s);
        let (e_neg, e2_neg) = truncated_moments(m_neg, s);
        let mean = (wp * e_pos - wn * e_neg) / total;
        let second = (wp * e2_pos + wn * e2_neg) / total;
        (mean, (second - mean * mean).max(0.0))
    }
}

impl Denoiser for SparseLaplaceBayes {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        self.validate()?;
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::invalid(format!("noise variance must be positive, got {sigma_sq}")));
        }
        if q.is_empty() {
            return Err(Error::invalid("cannot denoise an empty vector"));
        }
        let mut x_hat = Vec::with_capacity(q.len());
        let mut var_sum = 0.0;
        for &v in q {
            let (m, var) = self.posterior(v, sigma_sq);
            x_hat.push(m);
            var_sum += var;
        }
        Ok(Denoised { x_hat, mean_deriv: var_sum / (q.len() as f64 * sigma_sq) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::simpson;
    use approx::assert_relative_eq;

    fn quadrature_posterior(p: &SparseLaplaceBayes, q: f64, sv: f64) -> (f64, f64) {
        let b = p.scale;
        let lik = |x: f64| (-0.5 * (q - x) * (q - x) / sv).exp() / (2.0 * std::f64::consts::PI * sv).sqrt();
        let slab = |x: f64| p.epsilon / (2.0 * b) * (-x.abs() / b).exp() * lik(x);
        let (lo, hi, n) = (q.min(0.0) - 40.0, q.max(0.0) + 40.0, 200_000);
        // The kink at zero is handled by integrating each half line separately.
        let half = |f: &dyn Fn(f64) -> f64| simpson(f, lo, -lo / n as f64, n) + simpson(f, 0.0, hi / n as f64, n);
        let z = (1.0 - p.epsilon) * lik(0.0) + half(&slab);
        let m1 = half(&|x| x * slab(x)) / z;
        let m2 = half(&|x| x * x * slab(x)) / z;
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn matches_quadrature() {
        let p = SparseLaplaceBayes::default();
        for sv in [0.01, 0.1, 1.0] {
            for q in [-4.0, -1.3, -0.2, 0.0, 0.05, 0.7, 2.0, 6.0] {
                let (m, v) = p.posterior(q, sv);
                let (mq, vq) = quadrature_posterior(&p, q, sv);
                assert!((m - mq).abs() < 1e-9, "q={q} sv={sv}: {m} vs {mq}");
                assert!((v - vq).abs() < 1e-8, "q={q} sv={sv}: {v} vs {vq}");
            }
        }
    }

    #[test]
    fn derivative_is_posterior_variance() {
        let p = SparseLaplaceBayes::default();
        let sv = 0.2;
        for q in [-2.0, -0.3, 0.4, 1.1, 3.0] {
            let h = 1e-5;
            let fd = (p.posterior(q + h, sv).0 - p.posterior(q - h, sv).0) / (2.0 * h);
            assert_relative_eq!(fd, p.posterior(q, sv).1 / sv, max_relative = 1e-6);
        }
    }

    #[test]
    fn odd_and_finite() {
        let p = SparseLaplaceBayes::default();
        for q in [0.3, 5.0, 1e3, 1e6] {
            let (a, va) = p.posterior(q, 0.05);
            let (b, vb) = p.posterior(-q, 0.05);
            assert!(a.is_finite() && va.is_finite());
            assert_relative_eq!(a, -b, max_relative = 1e-12);
            assert_relative_eq!(va, vb, max_relative = 1e-9);
        }
        assert_eq!(p.posterior(0.0, 1.0).0, 0.0);
    }

    #[test]
    fn log_cdf_tail() {
        assert_relative_eq!(ln_norm_cdf(0.0), 0.5f64.ln(), epsilon = 1e-15);
        // Both branches agree where they meet.
        let z = -30.0;
        let direct = (0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)).ln();
        assert_relative_eq!(ln_norm_cdf(z - 1e-12), direct, max_relative = 1e-9);
        assert!(ln_norm_cdf(-1e4).is_finite());
    }
}
