//! Scalar Gaussian mixtures `p(x) = Σ α_s N(x; μ_s, σ_s²)` and their fitting.

mod em;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use em::{em_fit, init_components, EmConfig, EmFit, FitStatus};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub alpha: f64,
    pub mu: f64,
    pub sigma_sq: f64,
}

/// A normalized mixture. Zero-variance components are point masses; they
/// appear in clean-signal priors obtained by [`GaussianMixture::subtract_noise`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Component>", into = "Vec<Component>")]
pub struct GaussianMixture {
    components: Vec<Component>,
}

impl TryFrom<Vec<Component>> for GaussianMixture {
    type Error = Error;

    fn try_from(components: Vec<Component>) -> Result<Self> {
        Self::new(components)
    }
}

impl From<GaussianMixture> for Vec<Component> {
    fn from(gm: GaussianMixture) -> Self {
        gm.components
    }
}

impl GaussianMixture {
    /// Validates the components. Weights must be positive and sum to one
    /// within 1e-9; sums off by more than 1e-12 are renormalized.
    pub fn new(mut components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        for c in &components {
            if !(c.alpha > 0.0) || !c.alpha.is_finite() {
                return Err(Error::invalid(format!("mixture weights must be positive, got {}", c.alpha)));
            }
            if !c.mu.is_finite() || !(c.sigma_sq >= 0.0) || !c.sigma_sq.is_finite() {
                return Err(Error::invalid(format!(
                    "invalid component mean {} / variance {}",
                    c.mu, c.sigma_sq
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.alpha).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        if (total - 1.0).abs() > 1e-12 {
            components.iter_mut().for_each(|c| c.alpha /= total);
        }
        Ok(Self { components })
    }

    pub(crate) fn from_unnormalized(mut components: Vec<Component>) -> Result<Self> {
        components.retain(|c| c.alpha > 0.0);
        let total: f64 = components.iter().map(|c| c.alpha).sum();
        components.iter_mut().for_each(|c| c.alpha /= total);
        Self::new(components)
    }

    pub fn single(mu: f64, sigma_sq: f64) -> Result<Self> {
        Self::new(vec![Component { alpha: 1.0, mu, sigma_sq }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.alpha * c.mu).sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.components.iter().map(|c| c.alpha * (c.sigma_sq + c.mu * c.mu)).sum()
    }

    /// `ln p(x)`. A point mass contributes only when `x` sits exactly on it.
    pub fn log_pdf(&self, x: f64) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.alpha.ln() + log_normal(x, c.mu, c.sigma_sq)))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn loglik(&self, data: &[f64]) -> f64 {
        data.iter().map(|&x| self.log_pdf(x)).sum()
    }

    /// Mixture of `x + v` with `v ~ N(0, sigma_v_sq)`: every variance grows
    /// by `sigma_v_sq`.
    pub fn add_noise(&self, sigma_v_sq: f64) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| Component { sigma_sq: c.sigma_sq + sigma_v_sq, ..*c })
                .collect(),
        }
    }

    /// Deconvolve AWGN: every variance shrinks by `sigma_v_sq`. Components
    /// whose variance equals the noise variance become point masses.
    pub fn subtract_noise(&self, sigma_v_sq: f64) -> Result<Self> {
        let mut components = Vec::with_capacity(self.len());
        for c in &self.components {
            if c.sigma_sq < sigma_v_sq {
                return Err(Error::Contract(format!(
                    "component variance {} is below the noise variance {sigma_v_sq}",
                    c.sigma_sq
                )));
            }
            components.push(Component { sigma_sq: c.sigma_sq - sigma_v_sq, ..*c });
        }
        Ok(Self { components })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn log_normal(x: f64, mu: f64, var: f64) -> f64 {
    if var == 0.0 {
        return if x == mu { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let d = x - mu;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}
