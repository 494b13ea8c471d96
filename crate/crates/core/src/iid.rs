//! Conditional-expectation denoising of i.i.d. data under a Gaussian-mixture
//! prior.
//!
//! With `v_s = σ_s² + σ_v²` and `N_s(q) = N(q; μ_s, v_s)`,
//!
//! ```text
//! f(q) = Σ α_s N_s(q) (σ_s²/v_s (q - μ_s) + μ_s),   g(q) = Σ α_s N_s(q),
//! η(q) = f/g,   η'(q) = (f'g - f g') / g².
//! ```
//!
//! All four sums are evaluated with the component likelihoods divided by
//! their largest value, which leaves both ratios unchanged.

use serde::{Deserialize, Serialize};

use crate::amp::{Denoised, Denoiser};
use crate::error::{Error, Result};
use crate::gm::{em_fit, EmConfig, FitStatus, GaussianMixture};

#[derive(Debug, Clone)]
pub struct GmDenoiser {
    prior: GaussianMixture,
    sigma_v_sq: f64,
    /// Per component: (ln α_s - ln v_s / 2, μ_s, v_s, σ_s² / v_s).
    terms: Vec<(f64, f64, f64, f64)>,
}

impl GmDenoiser {
    pub fn new(prior: GaussianMixture, sigma_v_sq: f64) -> Result<Self> {
        if !(sigma_v_sq > 0.0) || !sigma_v_sq.is_finite() {
            return Err(Error::invalid(format!("noise variance must be positive, got {sigma_v_sq}")));
        }
        let terms = prior
            .components()
            .iter()
            .map(|c| {
                let v = c.sigma_sq + sigma_v_sq;
                (c.alpha.ln() - 0.5 * v.ln(), c.mu, v, c.sigma_sq / v)
            })
            .collect();
        Ok(Self { prior, sigma_v_sq, terms })
    }

    pub fn prior(&self) -> &GaussianMixture {
        &self.prior
    }

    pub fn sigma_v_sq(&self) -> f64 {
        self.sigma_v_sq
    }

    /// `(η(q), η'(q))`.
    pub fn eval(&self, q: f64) -> (f64, f64) {
        let log_w = |&(c, mu, v, _): &(f64, f64, f64, f64)| c - 0.5 * (q - mu) * (q - mu) / v;
        let (mut top, mut max) = (0, f64::NEG_INFINITY);
        for (s, t) in self.terms.iter().enumerate() {
            let l = log_w(t);
            if l > max {
                (top, max) = (s, l);
            }
        }
        let parts = |&(_, mu, v, shrink): &(f64, f64, f64, f64)| (shrink * (q - mu) + mu, -(q - mu) / v, shrink);
        let (e0, d0, _) = parts(&self.terms[top]);
        // g, and f, g', f' relative to g with est and d(ln N)/dq measured
        // from the dominant component; f'g - f g' reduces to the covariance
        // of the two plus the mean shrinkage.
        let (mut g, mut de, mut dd, mut ed, mut sh) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in &self.terms {
            let w = (log_w(t) - max).exp();
            let (e, d, shrink) = parts(t);
            g += w;
            de += w * (e - e0);
            dd += w * (d - d0);
            ed += w * (e - e0) * (d - d0);
            sh += w * shrink;
        }
        let (de, dd) = (de / g, dd / g);
        (e0 + de, sh / g + ed / g - de * dd)
    }

    pub fn denoise(&self, q: f64) -> f64 {
        self.eval(q).0
    }

    pub fn derivative(&self, q: f64) -> f64 {
        self.eval(q).1
    }

    /// Element-wise denoising with the average derivative.
    pub fn denoise_vector(&self, q: &[f64]) -> Result<Denoised> {
        if q.is_empty() {
            return Err(Error::invalid("cannot denoise an empty vector"));
        }
        let mut x_hat = Vec::with_capacity(q.len());
        let mut deriv_sum = 0.0;
        for &v in q {
            let (e, d) = self.eval(v);
            x_hat.push(e);
            deriv_sum += d;
        }
        Ok(Denoised { x_hat, mean_deriv: deriv_sum / q.len() as f64 })
    }
}

/// AMP denoiser with a fixed mixture prior; the channel variance is taken
/// from each call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDenoiser {
    pub prior: GaussianMixture,
}

impl Denoiser for PriorDenoiser {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        GmDenoiser::new(self.prior.clone(), sigma_sq)?.denoise_vector(q)
    }
}

/// Fits a mixture to the noisy input, deconvolves it, and applies the
/// resulting conditional-expectation rule.
pub fn fit_prior(q: &[f64], sigma_v_sq: f64, em: &EmConfig) -> Result<(GaussianMixture, FitStatus)> {
    let fit = em_fit(q, sigma_v_sq, em)?;
    Ok((fit.mixture.subtract_noise(sigma_v_sq)?, fit.status))
}

/// Learns the prior from each AMP input separately.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GmIidDenoiser {
    pub em: EmConfig,
}

impl Denoiser for GmIidDenoiser {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        let (prior, _) = fit_prior(q, sigma_sq, &self.em)?;
        GmDenoiser::new(prior, sigma_sq)?.denoise_vector(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gm::Component;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mixture(parts: &[(f64, f64, f64)]) -> GaussianMixture {
        GaussianMixture::new(parts.iter().map(|&(alpha, mu, sigma_sq)| Component { alpha, mu, sigma_sq }).collect())
            .unwrap()
    }

    #[test]
    fn wiener_case() {
        let d = GmDenoiser::new(GaussianMixture::single(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert_relative_eq!(d.denoise(2.0), 1.0, epsilon = 1e-15);
        for q in [-50.0, -1.0, 0.0, 3.3, 1e3] {
            assert_relative_eq!(d.derivative(q), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_deltas_give_zero() {
        let d = GmDenoiser::new(mixture(&[(0.5, -1.0, 0.0), (0.5, 1.0, 0.0)]), 1.0).unwrap();
        assert_eq!(d.denoise(0.0), 0.0);
        // Posterior of ±1 at q: tanh(q / σ²).
        assert_relative_eq!(d.denoise(0.7), 0.7f64.tanh(), epsilon = 1e-14);
        assert_relative_eq!(d.derivative(0.7), 1.0 - 0.7f64.tanh().powi(2), epsilon = 1e-13);
    }

    #[test]
    fn far_tail_is_finite() {
        let d = GmDenoiser::new(mixture(&[(0.3, -1.0, 0.0), (0.5, 0.5, 1.0), (0.2, 2.0, 0.25)]), 0.5).unwrap();
        for q in [-1e6, -1e3, 1e3, 1e6] {
            let (e, der) = d.eval(q);
            assert!(e.is_finite() && der.is_finite());
            // Widest component dominates: affine rule with slope 1/(1+0.5).
            assert_relative_eq!(der, 1.0 / 1.5, epsilon = 1e-9);
            assert_relative_eq!(e, 0.5 + (q - 0.5) / 1.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn denoise_vector_matches_scalar() {
        let d = GmDenoiser::new(mixture(&[(0.9, 0.0, 0.0), (0.1, 0.0, 2.0)]), 0.3).unwrap();
        let out = d.denoise_vector(&[0.4]).unwrap();
        assert_eq!(out.x_hat[0], d.denoise(0.4));
        assert_eq!(out.mean_deriv, d.derivative(0.4));
        assert!(d.denoise_vector(&[]).is_err());
    }

    #[test]
    fn invalid_noise() {
        let g = GaussianMixture::single(0.0, 1.0).unwrap();
        assert!(GmDenoiser::new(g.clone(), 0.0).is_err());
        assert!(GmDenoiser::new(g, f64::NAN).is_err());
    }

    #[test]
    fn gm_iid_beats_identity_on_sparse_data() {
        use rand_distr::{Distribution, Normal};
        let x = crate::model::gen_sparse_laplace(5_000, 3).unwrap();
        let sv: f64 = 0.05;
        let noise = Normal::new(0.0, sv.sqrt()).unwrap();
        let mut r = crate::rng::rng(4);
        let q: Vec<f64> = x.iter().map(|v| v + noise.sample(&mut r)).collect();
        let out = GmIidDenoiser::default().denoise(&q, sv).unwrap();
        let mse = crate::model::mse(&x, &out.x_hat).unwrap();
        assert!(mse < 0.3 * sv, "mse {mse}");
        assert!(out.mean_deriv > 0.0 && out.mean_deriv < 1.0);
    }

    #[test]
    fn mean_derivative_bounded_on_model_data() {
        use rand::Rng as _;
        use rand_distr::{Distribution, Normal};
        // Pointwise η' can exceed one (η'(0) = 9 here), but its average over
        // data from the model is MMSE / σ_v² ≤ 1.
        let d = GmDenoiser::new(mixture(&[(0.5, -3.0, 0.0), (0.5, 3.0, 0.0)]), 1.0).unwrap();
        assert_relative_eq!(d.derivative(0.0), 9.0, epsilon = 1e-12);
        let mut r = crate::rng::rng(1);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let q: Vec<f64> = (0..20_000)
            .map(|_| if r.random::<bool>() { 3.0 } else { -3.0 } + noise.sample(&mut r))
            .collect();
        let out = d.denoise_vector(&q).unwrap();
        assert!(out.mean_deriv > 0.0 && out.mean_deriv <= 1.0, "{}", out.mean_deriv);
    }

    proptest! {
        #[test]
        fn output_within_component_estimates(
            parts in prop::collection::vec((0.05f64..1.0, -3.0f64..3.0, 0.0f64..2.0), 1..5),
            sv in 0.05f64..2.0,
            q in -20.0f64..20.0,
        ) {
            let total: f64 = parts.iter().map(|p| p.0).sum();
            let g = mixture(&parts.iter().map(|&(a, m, v)| (a / total, m, v)).collect::<Vec<_>>());
            let d = GmDenoiser::new(g.clone(), sv).unwrap();
            let (e, der) = d.eval(q);
            let ests: Vec<f64> = g.components().iter()
                .map(|c| c.sigma_sq / (c.sigma_sq + sv) * (q - c.mu) + c.mu).collect();
            let lo = ests.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ests.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(e >= lo - 1e-9 && e <= hi + 1e-9);
            prop_assert!(der > 0.0, "derivative {der}");
        }

        #[test]
        fn separable(qs in prop::collection::vec(-5.0f64..5.0, 2..20)) {
            let d = GmDenoiser::new(mixture(&[(0.7, 0.0, 0.0), (0.3, 1.0, 0.5)]), 0.4).unwrap();
            let a = d.denoise_vector(&qs).unwrap();
            let mut rev = qs.clone();
            rev.reverse();
            let b = d.denoise_vector(&rev).unwrap();
            for (i, v) in a.x_hat.iter().enumerate() {
                prop_assert_eq!(*v, b.x_hat[qs.len() - 1 - i]);
            }
        }
    }
}
