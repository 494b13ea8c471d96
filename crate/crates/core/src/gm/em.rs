//! Component-wise EM with minimum-message-length annihilation.
//!
//! Components are updated one at a time. After each M-step the weight is
//! `max(0, Σ_i w_is - floor) / n` followed by renormalization, so a component
//! that explains fewer than `floor` effective samples dies on the spot. The
//! cost being minimized is
//!
//! ```text
//! L = Σ_s ln(n α_s / 12) + (S/2) ln(n / 12) + 3S/2 - ln p(q | θ)
//! ```
//!
//! (two free parameters per component). The known noise variance σ_v² of the
//! data acts as side information: no component of `q = x + v` can be
//! narrower than σ_v², so components well below it are removed and the rest
//! are clamped up to it once the fit ends.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Component, GaussianMixture};
use crate::error::{Error, Result};
use crate::rng;

const N_PARAMS: f64 = 2.0;
/// Remaining share of a point's density below which its total is recomputed
/// from scratch instead of updated in place.
const CANCELLATION: f64 = 1e-6;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Upper bound on the number of initial components.
    pub s_max: usize,
    /// Initial component variance; the sample variance of the data if unset.
    pub sigma_init_sq: Option<f64>,
    /// Effective sample count a component must exceed to keep a nonzero weight.
    pub min_weight_floor: f64,
    /// Components narrower than this fraction of the noise variance are removed.
    pub var_floor_ratio: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Also try smaller models by repeatedly removing the lightest component
    /// and keep the lowest-cost one.
    pub forced_pruning: bool,
    /// Picks the first initial mean.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            s_max: 20,
            sigma_init_sq: None,
            min_weight_floor: N_PARAMS / 2.0,
            var_floor_ratio: 0.9,
            max_iters: 500,
            rel_tol: 1e-5,
            forced_pruning: true,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s_max == 0 {
            return Err(Error::invalid("s_max must be at least 1"));
        }
        if let Some(v) = self.sigma_init_sq {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("sigma_init_sq must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.min_weight_floor >= 0.0) || !self.min_weight_floor.is_finite() {
            return Err(Error::invalid("min_weight_floor must be finite and nonnegative"));
        }
        if !(self.var_floor_ratio > 0.0 && self.var_floor_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "var_floor_ratio must lie in (0, 1), got {}",
                self.var_floor_ratio
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIters,
    /// Every component was annihilated; the result is a single Gaussian
    /// matched to the data moments.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub components: usize,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    /// Model of the noisy data; every variance is at least σ_v².
    pub mixture: GaussianMixture,
    pub status: FitStatus,
    /// Cost of the selected model before variance clamping.
    pub cost: f64,
    pub sweeps: usize,
    /// Cost after each full sweep, with the component count at that point.
    pub cost_trace: Vec<CostPoint>,
}

fn mean_var(q: &[f64]) -> (f64, f64) {
    let n = q.len() as f64;
    let mean = q.iter().sum::<f64>() / n;
    let var = q.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Distance-driven initialization: one mean drawn from the data, then the
/// symbol farthest from all current means is added while that distance
/// exceeds `0.1 σ_init` and fewer than `s_max` means exist. Ties go to the
/// earliest symbol.
pub fn init_components(q: &[f64], cfg: &EmConfig) -> Result<GaussianMixture> {
    if q.is_empty() {
        return Err(Error::invalid("cannot initialize a mixture from empty data"));
    }
    cfg.validate()?;
    let sigma_init_sq = cfg.sigma_init_sq.unwrap_or_else(|| mean_var(q).1);
    let threshold = 0.1 * sigma_init_sq.sqrt();

    let first = q[rng::rng(cfg.seed).random_range(0..q.len())];
    let mut means = vec![first];
    let mut dist: Vec<f64> = q.iter().map(|v| (v - first).abs()).collect();
    while means.len() < cfg.s_max {
        let (far, d) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        if !(d > threshold) {
            break;
        }
        let mu = q[far];
        means.push(mu);
        dist.iter_mut().zip(q).for_each(|(d, v)| *d = d.min((v - mu).abs()));
    }
    let alpha = 1.0 / means.len() as f64;
    GaussianMixture::from_unnormalized(
        means.into_iter().map(|mu| Component { alpha, mu, sigma_sq: sigma_init_sq }).collect(),
    )
}

struct Work<'a> {
    q: &'a [f64],
    alpha: Vec<f64>,
    mu: Vec<f64>,
    var: Vec<f64>,
    dens: Vec<Vec<f64>>,
    total: Vec<f64>,
    resp: Vec<f64>,
}

fn fill_density(out: &mut [f64], q: &[f64], mu: f64, var: f64) {
    let scale = INV_SQRT_2PI / var.sqrt();
    let half_prec = -0.5 / var;
    for (o, &v) in out.iter_mut().zip(q) {
        let d = v - mu;
        *o = scale * (half_prec * d * d).exp();
    }
}

impl<'a> Work<'a> {
    fn new(q: &'a [f64], init: &GaussianMixture, var_min: f64) -> Self {
        let comps = init.components();
        let mut w = Work {
            q,
            alpha: comps.iter().map(|c| c.alpha).collect(),
            mu: comps.iter().map(|c| c.mu).collect(),
            var: comps.iter().map(|c| c.sigma_sq.max(var_min)).collect(),
            dens: vec![vec![0.0; q.len()]; comps.len()],
            total: vec![0.0; q.len()],
            resp: vec![0.0; q.len()],
        };
        for s in 0..w.len() {
            fill_density(&mut w.dens[s], q, w.mu[s], w.var[s]);
        }
        w.refresh_total();
        w
    }

    fn len(&self) -> usize {
        self.alpha.len()
    }

    fn refresh_total(&mut self) {
        self.total.iter_mut().for_each(|t| *t = 0.0);
        for (a, d) in self.alpha.iter().zip(&self.dens) {
            self.total.iter_mut().zip(d).for_each(|(t, &d)| *t += a * d);
        }
    }

    fn loglik(&self) -> f64 {
        self.total.iter().map(|t| t.max(f64::MIN_POSITIVE).ln()).sum()
    }

    fn cost(&self) -> f64 {
        let n = self.q.len() as f64;
        let s = self.len() as f64;
        let half = N_PARAMS / 2.0;
        half * self.alpha.iter().map(|a| (n * a / 12.0).ln()).sum::<f64>()
            + 0.5 * s * (n / 12.0).ln()
            + 0.5 * s * (N_PARAMS + 1.0)
            - self.loglik()
    }

    /// Drops component `s`, renormalizes the remaining weights and recomputes
    /// the total density.
    fn remove(&mut self, s: usize) {
        self.alpha.remove(s);
        self.mu.remove(s);
        self.var.remove(s);
        self.dens.remove(s);
        let sum: f64 = self.alpha.iter().sum();
        if sum > 0.0 {
            self.alpha.iter_mut().for_each(|v| *v /= sum);
        }
        self.refresh_total();
    }

    /// M-step for one component. Returns false if it was annihilated.
    fn update(&mut self, s: usize, cfg: &EmConfig, sigma_v_sq: f64, var_min: f64) -> bool {
        let a_old = self.alpha[s];
        let mut eff = 0.0;
        let mut sum_q = 0.0;
        for ((r, &t), (&d, &v)) in self.resp.iter_mut().zip(&self.total).zip(self.dens[s].iter().zip(self.q)) {
            *r = a_old * d / t.max(f64::MIN_POSITIVE);
            eff += *r;
            sum_q += *r * v;
        }
        let alive = eff > 0.0 && eff.is_finite();
        let (mu, var) = if alive {
            let mu = sum_q / eff;
            let ss: f64 = self.resp.iter().zip(self.q).map(|(r, v)| r * (v - mu) * (v - mu)).sum();
            (mu, (ss / eff).max(var_min))
        } else {
            (0.0, 0.0)
        };
        let n = self.q.len() as f64;
        let raw = ((eff - cfg.min_weight_floor).max(0.0)) / n;
        if !alive || raw == 0.0 || var < cfg.var_floor_ratio * sigma_v_sq || !mu.is_finite() {
            self.remove(s);
            return false;
        }
        let norm = 1.0 - a_old + raw;
        // `resp` is done; keep the old densities there for the total update.
        self.resp.copy_from_slice(&self.dens[s]);
        fill_density(&mut self.dens[s], self.q, mu, var);
        let mut stale = Vec::new();
        for (i, ((t, &d_old), &d_new)) in self.total.iter_mut().zip(&self.resp).zip(&self.dens[s]).enumerate() {
            let rest = *t - a_old * d_old;
            if rest < CANCELLATION * *t {
                stale.push(i);
            }
            *t = ((rest + raw * d_new) / norm).max(0.0);
        }
        self.alpha[s] = raw;
        self.alpha.iter_mut().for_each(|v| *v /= norm);
        self.mu[s] = mu;
        self.var[s] = var;
        for i in stale {
            self.total[i] = self.alpha.iter().zip(&self.dens).map(|(a, d)| a * d[i]).sum();
        }
        true
    }

    fn sweep(&mut self, cfg: &EmConfig, sigma_v_sq: f64, var_min: f64) -> bool {
        let before = self.len();
        let mut s = 0;
        while s < self.len() {
            if self.update(s, cfg, sigma_v_sq, var_min) {
                s += 1;
            }
        }
        self.refresh_total();
        self.len() != before
    }

    fn snapshot(&self) -> Vec<Component> {
        (0..self.len())
            .map(|s| Component { alpha: self.alpha[s], mu: self.mu[s], sigma_sq: self.var[s] })
            .collect()
    }

    /// Runs sweeps until the relative cost change drops below `rel_tol` in a
    /// sweep without annihilations.
    fn converge(
        &mut self,
        cfg: &EmConfig,
        sigma_v_sq: f64,
        var_min: f64,
        trace: &mut Vec<CostPoint>,
    ) -> (bool, usize) {
        let mut prev = self.cost();
        for it in 1..=cfg.max_iters {
            let annihilated = self.sweep(cfg, sigma_v_sq, var_min);
            if self.len() == 0 {
                return (true, it);
            }
            let cost = self.cost();
            trace.push(CostPoint { components: self.len(), cost });
            if !annihilated && (cost - prev).abs() <= cfg.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
                return (true, it);
            }
            prev = cost;
        }
        (false, cfg.max_iters)
    }
}

/// Fits a mixture to the noisy data `q` whose additive Gaussian noise has
/// variance `sigma_v_sq`.
pub fn em_fit(q: &[f64], sigma_v_sq: f64, cfg: &EmConfig) -> Result<EmFit> {
    if !(sigma_v_sq >= 0.0) || !sigma_v_sq.is_finite() {
        return Err(Error::invalid(format!("noise variance must be finite and nonnegative, got {sigma_v_sq}")));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contains non-finite values"));
    }
    let init = init_components(q, cfg)?;
    let (data_mean, data_var) = mean_var(q);
    let scale = data_var.max(sigma_v_sq);
    let var_min = 1e-12 * if scale > 0.0 { scale } else { 1.0 };

    let mut work = Work::new(q, &init, var_min);
    let mut trace = Vec::new();
    let mut sweeps = 0;
    let mut all_converged = true;
    let mut best: Option<(f64, Vec<Component>)> = None;
    loop {
        let (converged, used) = work.converge(cfg, sigma_v_sq, var_min, &mut trace);
        sweeps += used;
        all_converged &= converged;
        if work.len() == 0 {
            break;
        }
        let cost = work.cost();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, work.snapshot()));
        }
        if !cfg.forced_pruning || work.len() == 1 {
            break;
        }
        let lightest = (0..work.len()).fold(0, |m, s| if work.alpha[s] < work.alpha[m] { s } else { m });
        work.remove(lightest);
    }

    let cost = best.as_ref().map_or(f64::NAN, |b| b.0);
    let (mixture, status) = match best {
        Some((_, comps)) => {
            let comps = comps
                .into_iter()
                .map(|c| Component { sigma_sq: c.sigma_sq.max(sigma_v_sq), ..c })
                .collect();
            let status = if all_converged { FitStatus::Converged } else { FitStatus::MaxIters };
            (GaussianMixture::from_unnormalized(comps)?, status)
        }
        None => (
            GaussianMixture::single(data_mean, data_var.max(sigma_v_sq).max(var_min))?,
            FitStatus::Fallback,
        ),
    };
    Ok(EmFit { mixture, status, cost, sweeps, cost_trace: trace })
}
