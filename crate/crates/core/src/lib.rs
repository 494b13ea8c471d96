//! Compressed-sensing reconstruction by approximate message passing (AMP)
//! with pluggable denoisers.
//!
//! - [`model`]: the linear system `y = A x + z`, signal generators, SNR/SDR.
//! - [`amp`]: the AMP engine and the [`amp::Denoiser`] contract.
//! - [`markov`]: Bayesian sliding-window denoisers for Markov sources.
//! - [`se`]: state-evolution prediction.
//! - [`gm`]: Gaussian mixtures and component-wise EM fitting.
//! - [`iid`]: conditional-expectation denoiser under a mixture prior.
//! - [`bayes`]: known-prior denoisers used as MMSE references.
//! - [`universal`]: the context-quantization universal denoiser.
//! - [`harness`]: experiment orchestration behind the `ampud` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod amp;
pub mod bayes;
pub mod markov;
pub mod error;
pub mod gm;
pub mod harness;
pub mod iid;
pub mod model;
pub mod rng;
pub mod se;
pub mod universal;

mod csvio;

pub use error::{Error, Result};
