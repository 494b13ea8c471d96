//! Signal generators: i.i.d. sparse Laplace, i.i.d. Gaussian, the two-state
//! Markov families (MConst, MUnif, MRad) and the four-state ±1 switching
//! source (M4).

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Nonzero probability of the sparse Laplace source.
pub const SPARSE_LAPLACE_RATE: f64 = 0.03;

/// Laplace scale giving unit variance (Var = 2b²).
pub const LAPLACE_UNIT_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovKind {
    MConst,
    MUnif,
    MRad,
    M4,
}

/// Parameters of a Markov source. `p01 = p(s1|s0)`, `p10 = p(s0|s1)`;
/// `switch_error` is only meaningful for [`MarkovKind::M4`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovSourceSpec {
    pub kind: MarkovKind,
    pub p01: f64,
    pub p10: f64,
    pub switch_error: f64,
}

impl MarkovSourceSpec {
    pub fn two_state(kind: MarkovKind, p01: f64, p10: f64) -> Result<Self> {
        let spec = Self { kind, p01, p10, switch_error: 0.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn m4(switch_error: f64) -> Result<Self> {
        let spec = Self { kind: MarkovKind::M4, p01: 0.0, p10: 0.0, switch_error };
        spec.validate()?;
        Ok(spec)
    }

    /// MConst with 3% nonzeros: p01 = 3/970, p10 = 0.10.
    pub fn mconst() -> Self {
        Self { kind: MarkovKind::MConst, p01: 3.0 / 970.0, p10: 0.10, switch_error: 0.0 }
    }

    /// MUnif with the same chain as [`Self::mconst`].
    pub fn munif() -> Self {
        Self { kind: MarkovKind::MUnif, ..Self::mconst() }
    }

    /// Dense MRad, 30% nonzeros: p01 = 3/70, p10 = 0.10.
    pub fn mrad() -> Self {
        Self { kind: MarkovKind::MRad, p01: 3.0 / 70.0, p10: 0.10, switch_error: 0.0 }
    }

    /// M4 with 3% switching errors.
    pub fn m4_default() -> Self {
        Self { kind: MarkovKind::M4, p01: 0.0, p10: 0.0, switch_error: 0.03 }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            MarkovKind::M4 => {
                if !(0.0..0.5).contains(&self.switch_error) {
                    return Err(Error::invalid(format!(
                        "M4 switch_error must lie in [0, 0.5), got {}",
                        self.switch_error
                    )));
                }
            }
            _ => {
                let open = |p: f64| p > 0.0 && p < 1.0;
                if !open(self.p01) || !open(self.p10) {
                    return Err(Error::invalid(format!(
                        "transition probabilities must lie in (0, 1), got p01={} p10={}",
                        self.p01, self.p10
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stationary probability of the nonzero state, p01/(p01+p10). M4 has no
    /// zero state and returns 1.
    pub fn nonzero_probability(&self) -> f64 {
        match self.kind {
            MarkovKind::M4 => 1.0,
            _ => self.p01 / (self.p01 + self.p10),
        }
    }

    /// E[x²] under the stationary law.
    pub fn second_moment(&self) -> f64 {
        let p1 = self.nonzero_probability();
        match self.kind {
            MarkovKind::MConst | MarkovKind::MRad | MarkovKind::M4 => p1,
            MarkovKind::MUnif => p1 / 3.0,
        }
    }
}

/// Any signal family the toolkit can generate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSource {
    /// 0.97 δ(x) + 0.03 Laplace(0, variance 1), i.i.d.
    SparseLaplace,
    /// i.i.d. N(0, variance).
    Gaussian { variance: f64 },
    Mconst {
        #[serde(default = "default_sparse_p01")]
        p01: f64,
        #[serde(default = "default_p10")]
        p10: f64,
    },
    Munif {
        #[serde(default = "default_sparse_p01")]
        p01: f64,
        #[serde(default = "default_p10")]
        p10: f64,
    },
    Mrad {
        #[serde(default = "default_dense_p01")]
        p01: f64,
        #[serde(default = "default_p10")]
        p10: f64,
    },
    M4 {
        #[serde(default = "default_switch_error")]
        switch_error: f64,
    },
}

fn default_sparse_p01() -> f64 {
    3.0 / 970.0
}
fn default_dense_p01() -> f64 {
    3.0 / 70.0
}
fn default_p10() -> f64 {
    0.10
}
fn default_switch_error() -> f64 {
    0.03
}

impl SignalSource {
    pub fn markov_spec(&self) -> Option<MarkovSourceSpec> {
        let two = |kind, p01, p10| MarkovSourceSpec { kind, p01, p10, switch_error: 0.0 };
        match *self {
            SignalSource::SparseLaplace | SignalSource::Gaussian { .. } => None,
            SignalSource::Mconst { p01, p10 } => Some(two(MarkovKind::MConst, p01, p10)),
            SignalSource::Munif { p01, p10 } => Some(two(MarkovKind::MUnif, p01, p10)),
            SignalSource::Mrad { p01, p10 } => Some(two(MarkovKind::MRad, p01, p10)),
            SignalSource::M4 { switch_error } => Some(MarkovSourceSpec {
                kind: MarkovKind::M4,
                p01: 0.0,
                p10: 0.0,
                switch_error,
            }),
        }
    }

    pub fn from_markov(spec: MarkovSourceSpec) -> Self {
        match spec.kind {
            MarkovKind::MConst => SignalSource::Mconst { p01: spec.p01, p10: spec.p10 },
            MarkovKind::MUnif => SignalSource::Munif { p01: spec.p01, p10: spec.p10 },
            MarkovKind::MRad => SignalSource::Mrad { p01: spec.p01, p10: spec.p10 },
            MarkovKind::M4 => SignalSource::M4 { switch_error: spec.switch_error },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SignalSource::SparseLaplace => Ok(()),
            SignalSource::Gaussian { variance } if *variance > 0.0 => Ok(()),
            SignalSource::Gaussian { variance } => {
                Err(Error::invalid(format!("gaussian variance must be positive, got {variance}")))
            }
            other => other.markov_spec().expect("markov").validate(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            SignalSource::SparseLaplace => SPARSE_LAPLACE_RATE,
            SignalSource::Gaussian { variance } => *variance,
            other => other.markov_spec().expect("markov").second_moment(),
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            SignalSource::SparseLaplace => gen_sparse_laplace(n, seed),
            SignalSource::Gaussian { variance } => {
                check_n(n)?;
                let sd = variance.sqrt();
                let mut rng = rng::rng(seed);
                Ok((0..n)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        sd * g
                    })
                    .collect())
            }
            SignalSource::M4 { switch_error } => gen_m4(n, *switch_error, seed),
            other => gen_two_state_markov(n, &other.markov_spec().expect("markov"), seed),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::invalid("signal length must be at least 1"))
    } else {
        Ok(())
    }
}

fn sample_laplace(rng: &mut Rng, scale: f64) -> f64 {
    // inverse CDF on u ∈ (-1/2, 1/2)
    let u: f64 = rng.random::<f64>() - 0.5;
    let mag = 1.0 - 2.0 * u.abs();
    -scale * u.signum() * mag.max(f64::MIN_POSITIVE).ln()
}

/// i.i.d. draws from 0.97 δ(x) + 0.03 Laplace(0, 1/√2).
pub fn gen_sparse_laplace(n: usize, seed: u64) -> Result<Vec<f64>> {
    check_n(n)?;
    let mut rng = rng::rng(seed);
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < SPARSE_LAPLACE_RATE {
                sample_laplace(&mut rng, LAPLACE_UNIT_SCALE)
            } else {
                0.0
            }
        })
        .collect())
}

/// Raw two-state chain. `initial` forces the first state; otherwise it is
/// drawn from the stationary law. Accepts boundary probabilities so
/// deterministic chains can be exercised.
pub(crate) fn two_state_chain(
    n: usize,
    p01: f64,
    p10: f64,
    initial: Option<bool>,
    rng: &mut Rng,
) -> Vec<bool> {
    let mut states = Vec::with_capacity(n);
    let mut s = initial.unwrap_or_else(|| rng.random::<f64>() < p01 / (p01 + p10));
    for _ in 0..n {
        states.push(s);
        let u: f64 = rng.random();
        s = if s { u >= p10 } else { u < p01 };
    }
    states
}

/// Two-state Markov signal (MConst, MUnif or MRad) started from the
/// stationary distribution.
pub fn gen_two_state_markov(n: usize, spec: &MarkovSourceSpec, seed: u64) -> Result<Vec<f64>> {
    check_n(n)?;
    if spec.kind == MarkovKind::M4 {
        return Err(Error::invalid("gen_two_state_markov does not handle M4; use gen_m4"));
    }
    spec.validate()?;
    let mut rng = rng::rng(seed);
    let states = two_state_chain(n, spec.p01, spec.p10, None, &mut rng);
    Ok(states
        .into_iter()
        .map(|on| match (on, spec.kind) {
            (false, _) => 0.0,
            (true, MarkovKind::MConst) => 1.0,
            (true, MarkovKind::MUnif) => rng.random::<f64>(),
            (true, _) => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect())
}

/// Probability that the next M4 symbol is `next`, given the previous two.
///
/// The error-free pattern `+1,+1,-1,-1,...` switches sign after two equal
/// symbols and repeats after a switch. With probability `switch_error` the
/// opposite symbol is emitted, i.e. the switch happens one step too late
/// (after an equal pair) or too early (right after a switch).
pub(crate) fn m4_transition(prev2: f64, prev1: f64, next: f64, switch_error: f64) -> f64 {
    let expected = if prev2 == prev1 { -prev1 } else { prev1 };
    if next == expected {
        1.0 - switch_error
    } else {
        switch_error
    }
}

/// Four-state ±1 switching signal; the initial pair is drawn from the
/// (uniform) stationary law.
pub fn gen_m4(n: usize, switch_error: f64, seed: u64) -> Result<Vec<f64>> {
    check_n(n)?;
    MarkovSourceSpec::m4(switch_error)?;
    let mut rng = rng::rng(seed);
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    let mut x = Vec::with_capacity(n);
    x.push(sign(rng.random()));
    if n > 1 {
        x.push(sign(rng.random()));
    }
    while x.len() < n {
        let (a, b) = (x[x.len() - 2], x[x.len() - 1]);
        let stay_on_pattern = rng.random::<f64>() >= switch_error;
        let expected = if a == b { -b } else { b };
        x.push(if stay_on_pattern { expected } else { -expected });
    }
    Ok(x)
}
