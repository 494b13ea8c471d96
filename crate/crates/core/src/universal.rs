//! Context-clustering universal denoiser.
//!
//! Each symbol `q_j` gets the context of its `2k` neighbors (center
//! excluded), weighted so that near neighbors count more:
//!
//! ```text
//! w_i = exp(-β (k - i)),        i = 1..k
//! w_i = exp(-β (i - k - 1)),    i = k+1..2k
//! β   = b1 log10(σ_v² / (‖q‖²/N - σ_v²)) + b2
//! ```
//!
//! Weighted contexts are grouped by k-means. Symbols sharing a cluster are
//! treated as i.i.d.: a Gaussian mixture is fitted to the cluster (topped up
//! to `T` symbols with the nearest outside contexts), deconvolved, and used
//! in the scalar conditional-expectation rule for the cluster's own members.
//!
//! Near the ends of the sequence a missing neighbor at distance `d` on one
//! side is replaced by the neighbor at distance `d` on the other side, so
//! every symbol has a full context that never contains itself.

use std::sync::Mutex;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::{Denoised, Denoiser};
use crate::error::{Error, Result};
use crate::gm::{EmConfig, FitStatus, GaussianMixture};
use crate::iid::{fit_prior, GmDenoiser};
use crate::rng;

/// Floor on the effective signal-to-noise ratio inside the decay rule.
pub const SNR_FLOOR: f64 = 1e-3;
pub const BETA_MIN: f64 = 0.01;
pub const BETA_MAX: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniversalConfig {
    /// Half context length.
    pub k: usize,
    /// Initial number of clusters.
    pub l_init: usize,
    /// Minimum number of symbols used to learn each cluster's density.
    pub t: usize,
    pub b1: f64,
    pub b2: f64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    /// Seeds the first k-means center.
    pub seed: u64,
    pub em: EmConfig,
}

impl Default for UniversalConfig {
    fn default() -> Self {
        Self {
            k: 6,
            l_init: 10,
            t: 256,
            b1: 0.1,
            b2: 0.3,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-6,
            seed: 0,
            em: EmConfig::default(),
        }
    }
}

impl UniversalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l_init == 0 || self.t == 0 || self.kmeans_max_iters == 0 {
            return Err(Error::invalid("k, l_init, t and kmeans_max_iters must be at least 1"));
        }
        if !self.b1.is_finite() || !self.b2.is_finite() || !(self.kmeans_tol >= 0.0) {
            return Err(Error::invalid("b1, b2 must be finite and kmeans_tol nonnegative"));
        }
        self.em.validate()
    }
}

/// `N` contexts of length `2k`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    k: usize,
    data: Vec<f64>,
    weights: Vec<f64>,
}

impl ContextSet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.data.len() / (2 * self.k)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn context(&self, j: usize) -> &[f64] {
        let w = 2 * self.k;
        &self.data[j * w..(j + 1) * w]
    }

    /// Weights applied so far (all ones for raw contexts).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn dim(&self) -> usize {
        2 * self.k
    }
}

pub fn build_contexts(q: &[f64], k: usize) -> Result<ContextSet> {
    let n = q.len();
    if k == 0 {
        return Err(Error::invalid("context half-width must be at least 1"));
    }
    if n <= 2 * k {
        return Err(Error::invalid(format!("need more than {} symbols for k = {k}, got {n}", 2 * k)));
    }
    let mut data = Vec::with_capacity(n * 2 * k);
    for j in 0..n {
        for d in (1..=k).rev() {
            data.push(if j >= d { q[j - d] } else { q[j + d] });
        }
        for d in 1..=k {
            data.push(if j + d < n { q[j + d] } else { q[j - d] });
        }
    }
    Ok(ContextSet { k, data, weights: vec![1.0; 2 * k] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRate {
    pub beta: f64,
    /// The data energy did not exceed the noise variance, or the effective
    /// SNR was below [`SNR_FLOOR`].
    pub low_signal: bool,
}

pub fn decay_rate(q: &[f64], sigma_v_sq: f64, b1: f64, b2: f64) -> Result<DecayRate> {
    if q.is_empty() || !(sigma_v_sq > 0.0) {
        return Err(Error::invalid("decay rate needs data and a positive noise variance"));
    }
    let energy = q.iter().map(|v| v * v).sum::<f64>() / q.len() as f64;
    let snr = (energy - sigma_v_sq) / sigma_v_sq;
    let low_signal = !(snr >= SNR_FLOOR);
    let snr = if low_signal { SNR_FLOOR } else { snr };
    let beta = (-b1 * snr.log10() + b2).clamp(BETA_MIN, BETA_MAX);
    Ok(DecayRate { beta, low_signal })
}

/// Weight vector of length `2k`; equal to one next to the center.
pub fn context_weights(k: usize, beta: f64) -> Vec<f64> {
    (0..2 * k)
        .map(|p| {
            let dist = if p < k { k - 1 - p } else { p - k };
            (-beta * dist as f64).exp()
        })
        .collect()
}

pub fn weight_contexts(cs: &ContextSet, beta: f64) -> Result<ContextSet> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::invalid(format!("decay rate must lie in (0, 1), got {beta}")));
    }
    let w = context_weights(cs.k, beta);
    let data = cs.data.chunks_exact(cs.dim()).flat_map(|c| c.iter().zip(&w).map(|(a, b)| a * b)).collect();
    let weights = cs.weights.iter().zip(&w).map(|(a, b)| a * b).collect();
    Ok(ContextSet { k: cs.k, data, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    /// Cluster of each symbol, in `0..L`.
    pub labels: Vec<usize>,
    /// `L × 2k`, row-major.
    pub centroids: Vec<f64>,
    /// Symbols used to learn each cluster's density, ascending.
    pub fit_lists: Vec<Vec<usize>>,
    /// Members of each cluster, ascending.
    pub denoise_lists: Vec<Vec<usize>>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective: Vec<f64>,
}

impl ClusterPartition {
    pub fn n_clusters(&self) -> usize {
        self.denoise_lists.len()
    }

    pub fn centroid(&self, l: usize) -> &[f64] {
        let dim = self.centroids.len() / self.n_clusters();
        &self.centroids[l * dim..(l + 1) * dim]
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(c: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    centroids
        .chunks_exact(dim)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (l, m)| {
            let d = dist_sq(c, m);
            if d < best.1 {
                (l, d)
            } else {
                best
            }
        })
}

/// Lloyd's k-means with farthest-point seeding; the first center is a
/// context drawn with `seed`. Nearest-centroid ties go to the lower index and
/// clusters left empty are dropped.
pub fn cluster(cs: &ContextSet, l_init: usize, seed: u64, max_iters: usize, tol: f64) -> Result<ClusterPartition> {
    if l_init == 0 {
        return Err(Error::invalid("need at least one cluster"));
    }
    let n = cs.len();
    let dim = cs.dim();
    let first = rng::rng(seed).random_range(0..n);
    let mut centroids = cs.context(first).to_vec();
    let mut min_d: Vec<f64> = (0..n).map(|j| dist_sq(cs.context(j), cs.context(first))).collect();
    while centroids.len() / dim < l_init {
        let (far, d) = min_d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (j, &d)| if d > b.1 { (j, d) } else { b });
        if !(d > 0.0) {
            break;
        }
        let c = cs.context(far).to_vec();
        min_d.iter_mut().enumerate().for_each(|(j, m)| *m = m.min(dist_sq(cs.context(j), &c)));
        centroids.extend(c);
    }

    let mut labels = vec![0usize; n];
    let mut objective = Vec::new();
    for _ in 0..max_iters {
        let mut obj = 0.0;
        for (j, label) in labels.iter_mut().enumerate() {
            let (l, d) = nearest(cs.context(j), &centroids, dim);
            *label = l;
            obj += d;
        }
        objective.push(obj);

        let l_now = centroids.len() / dim;
        let mut sums = vec![0.0; l_now * dim];
        let mut counts = vec![0usize; l_now];
        for (j, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            sums[l * dim..(l + 1) * dim].iter_mut().zip(cs.context(j)).for_each(|(s, v)| *s += v);
        }
        let mut next = Vec::with_capacity(sums.len());
        let mut shift: f64 = 0.0;
        for l in 0..l_now {
            if counts[l] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[l * dim..(l + 1) * dim].iter().map(|s| s / counts[l] as f64).collect();
            shift = shift.max(dist_sq(&mean, &centroids[l * dim..(l + 1) * dim]).sqrt());
            next.extend(mean);
        }
        let dropped = next.len() != centroids.len();
        centroids = next;
        if !dropped && shift < tol {
            break;
        }
    }
    // Final assignment against the final centroids, then drop empties.
    for (j, label) in labels.iter_mut().enumerate() {
        *label = nearest(cs.context(j), &centroids, dim).0;
    }
    let l_now = centroids.len() / dim;
    let mut members = vec![Vec::new(); l_now];
    for (j, &l) in labels.iter().enumerate() {
        members[l].push(j);
    }
    let mut remap = vec![usize::MAX; l_now];
    let mut kept_centroids = Vec::new();
    let mut denoise_lists = Vec::new();
    for (l, m) in members.into_iter().enumerate() {
        if !m.is_empty() {
            remap[l] = denoise_lists.len();
            kept_centroids.extend_from_slice(&centroids[l * dim..(l + 1) * dim]);
            denoise_lists.push(m);
        }
    }
    labels.iter_mut().for_each(|l| *l = remap[*l]);
    Ok(ClusterPartition {
        labels,
        centroids: kept_centroids,
        fit_lists: denoise_lists.clone(),
        denoise_lists,
        objective,
    })
}

/// Pads every fit list to at least `min(t, N)` symbols with the outside
/// contexts closest to the cluster centroid (ties to the lower index).
pub fn augment_clusters(part: &ClusterPartition, cs: &ContextSet, t: usize) -> Result<ClusterPartition> {
    if t == 0 {
        return Err(Error::invalid("t must be at least 1"));
    }
    let n = cs.len();
    let target = t.min(n);
    let mut out = part.clone();
    for (l, members) in part.denoise_lists.iter().enumerate() {
        if members.len() >= target {
            out.fit_lists[l] = members.clone();
            continue;
        }
        let centroid = part.centroid(l);
        let mut outside: Vec<(f64, usize)> = (0..n)
            .filter(|&j| part.labels[j] != l)
            .map(|j| (dist_sq(cs.context(j), centroid), j))
            .collect();
        let need = target - members.len();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        outside.select_nth_unstable_by(need - 1, cmp);
        let mut fit: Vec<usize> = members.iter().copied().chain(outside[..need].iter().map(|p| p.1)).collect();
        fit.sort_unstable();
        out.fit_lists[l] = fit;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub members: usize,
    pub fit_symbols: usize,
    pub status: FitStatus,
    /// Learned prior of the clean signal in this cluster.
    pub prior: GaussianMixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub beta: f64,
    pub low_signal: bool,
    pub clusters: Vec<ClusterDiagnostics>,
}

/// Runs the whole pipeline on one noisy sequence.
pub fn denoise_universal(q: &[f64], sigma_v_sq: f64, cfg: &UniversalConfig) -> Result<(Denoised, Diagnostics)> {
    cfg.validate()?;
    if !(sigma_v_sq > 0.0) || !sigma_v_sq.is_finite() {
        return Err(Error::invalid(format!("noise variance must be positive, got {sigma_v_sq}")));
    }
    let raw = build_contexts(q, cfg.k)?;
    let rate = decay_rate(q, sigma_v_sq, cfg.b1, cfg.b2)?;
    let cs = weight_contexts(&raw, rate.beta)?;
    let part = cluster(&cs, cfg.l_init, cfg.seed, cfg.kmeans_max_iters, cfg.kmeans_tol)?;
    let part = augment_clusters(&part, &cs, cfg.t)?;

    let fits: Vec<(GaussianMixture, FitStatus)> = part
        .fit_lists
        .par_iter()
        .map(|fit| {
            let data: Vec<f64> = fit.iter().map(|&j| q[j]).collect();
            fit_prior(&data, sigma_v_sq, &cfg.em)
        })
        .collect::<Result<_>>()?;

    let mut x_hat = vec![0.0; q.len()];
    let mut deriv = vec![0.0; q.len()];
    let mut clusters = Vec::with_capacity(fits.len());
    for (l, (prior, status)) in fits.into_iter().enumerate() {
        let d = GmDenoiser::new(prior, sigma_v_sq)?;
        for &j in &part.denoise_lists[l] {
            (x_hat[j], deriv[j]) = d.eval(q[j]);
        }
        clusters.push(ClusterDiagnostics {
            members: part.denoise_lists[l].len(),
            fit_symbols: part.fit_lists[l].len(),
            status,
            prior: d.prior().clone(),
        });
    }
    let mut deriv_sum = 0.0;
    deriv.iter().for_each(|d| deriv_sum += d);
    let out = Denoised { x_hat, mean_deriv: deriv_sum / q.len() as f64 };
    Ok((out, Diagnostics { beta: rate.beta, low_signal: rate.low_signal, clusters }))
}

/// AMP denoiser wrapper; optionally keeps the diagnostics of every call.
#[derive(Debug, Default)]
pub struct UniversalDenoiser {
    pub cfg: UniversalConfig,
    record: Option<Mutex<Vec<Diagnostics>>>,
}

impl UniversalDenoiser {
    pub fn new(cfg: UniversalConfig) -> Self {
        Self { cfg, record: None }
    }

    pub fn recording(cfg: UniversalConfig) -> Self {
        Self { cfg, record: Some(Mutex::new(Vec::new())) }
    }

    /// Diagnostics of all calls so far, oldest first.
    pub fn take_diagnostics(&self) -> Vec<Diagnostics> {
        self.record
            .as_ref()
            .map(|m| std::mem::take(&mut *m.lock().unwrap_or_else(|e| e.into_inner())))
            .unwrap_or_default()
    }
}

impl Denoiser for UniversalDenoiser {
    fn denoise(&self, q: &[f64], sigma_sq: f64) -> Result<Denoised> {
        let (out, diag) = denoise_universal(q, sigma_sq, &self.cfg)?;
        if let Some(m) = &self.record {
            m.lock().unwrap_or_else(|e| e.into_inner()).push(diag);
        }
        Ok(out)
    }
}
