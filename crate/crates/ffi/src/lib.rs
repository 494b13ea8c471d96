//! C interface to `ampud`.
//!
//! Every function returns an [`AmpudStatus`]. On failure a description of the
//! error is available from [`ampud_last_error`] on the same thread. Objects
//! are exposed as opaque handles that must be released with their `_free`
//! function. Arrays are caller-allocated; lengths are given in elements.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ampud::amp::{self, AmpConfig};
use ampud::error::Error;
use ampud::gm::{Component, EmConfig, GaussianMixture};
use ampud::harness::{generate_instance, DenoiserSpec};
use ampud::iid::{fit_prior, GmDenoiser};
use ampud::model::{LinearSystem, Matrix, SignalSource};
use ampud::universal::{denoise_universal, UniversalConfig};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpudStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Diverged = 4,
    ContractViolation = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

/// A measurement system `y = A x + z`.
pub struct AmpudSystem(LinearSystem);

/// A scalar Gaussian mixture prior.
pub struct AmpudMixture(GaussianMixture);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(AmpudStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidArgument(_) => AmpudStatus::InvalidArgument,
            Error::DimensionMismatch { .. } => AmpudStatus::DimensionMismatch,
            Error::Diverged { .. } => AmpudStatus::Diverged,
            Error::Contract(_) => AmpudStatus::ContractViolation,
            Error::Json(_) => AmpudStatus::Parse,
            Error::Io(_) | Error::Csv(_) => AmpudStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(AmpudStatus::Parse, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> AmpudStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AmpudStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AmpudStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AmpudStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(AmpudStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn json_or_default<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &str) -> Result<T, Failure> {
    if p.is_null() {
        Ok(T::default())
    } else {
        Ok(serde_json::from_str(text(p, what)?)?)
    }
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn ampud_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ampud_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Draw `n` samples of the signal described by `source_json`, e.g.
/// `{"kind":"mconst"}`, into `out_x`.
///
/// # Safety
/// `source_json` must be a NUL-terminated string and `out_x` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ampud_signal_generate(
    source_json: *const c_char,
    n: usize,
    seed: u64,
    out_x: *mut f64,
) -> AmpudStatus {
    guard(|| {
        let source: SignalSource = serde_json::from_str(text(source_json, "source_json")?)?;
        let out = slice_mut(out_x, n, "out_x")?;
        out.copy_from_slice(&source.generate(n, seed)?);
        Ok(())
    })
}

/// Build a system from a row-major `m x n` matrix, `m` measurements and the
/// noise variance.
///
/// # Safety
/// `a` must hold `m * n` values, `y` must hold `m` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampud_system_new(
    a: *const f64,
    m: usize,
    n: usize,
    y: *const f64,
    sigma_z_sq: f64,
    out: *mut *mut AmpudSystem,
) -> AmpudStatus {
    guard(|| {
        let len = m
            .checked_mul(n)
            .ok_or_else(|| Failure(AmpudStatus::InvalidArgument, "matrix size overflows".into()))?;
        let a = Matrix::from_row_major(m, n, slice(a, len, "a")?.to_vec())?;
        let sys = LinearSystem::new(a, slice(y, m, "y")?.to_vec(), sigma_z_sq)?;
        write_handle(out, AmpudSystem(sys))
    })
}

/// Generate a random test instance at the given SNR in dB. The true signal is
/// written to `out_x` when it is not NULL.
///
/// # Safety
/// `source_json` must be a NUL-terminated string, `out` writable and `out_x`
/// NULL or able to hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ampud_system_generate(
    source_json: *const c_char,
    n: usize,
    m: usize,
    snr_db: f64,
    seed: u64,
    out: *mut *mut AmpudSystem,
    out_x: *mut f64,
) -> AmpudStatus {
    guard(|| {
        let source: SignalSource = serde_json::from_str(text(source_json, "source_json")?)?;
        let inst = generate_instance(&source, n, m, snr_db, seed, 0)?;
        if !out_x.is_null() {
            slice_mut(out_x, n, "out_x")?.copy_from_slice(&inst.x);
        }
        write_handle(out, AmpudSystem(inst.system))
    })
}

/// Number of measurements and signal length.
///
/// # Safety
/// `sys` must be a live handle; `out_m` and `out_n` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn ampud_system_dims(sys: *const AmpudSystem, out_m: *mut usize, out_n: *mut usize) -> AmpudStatus {
    guard(|| {
        let sys = sys.as_ref().ok_or_else(|| null("sys"))?;
        if !out_m.is_null() {
            *out_m = sys.0.m();
        }
        if !out_n.is_null() {
            *out_n = sys.0.n();
        }
        Ok(())
    })
}

/// # Safety
/// `sys` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ampud_system_free(sys: *mut AmpudSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Run `t_max` AMP iterations with damping `lambda`.
///
/// `denoiser_json` selects the denoiser, e.g. `{"kind":"universal"}` or
/// `{"kind":"gm_iid"}`. `source_json` is only consulted by denoisers that need
/// the true source and may be NULL otherwise. The estimate goes to `out_x`
/// (length `n`); `out_sigma_hat_sq`, when not NULL, receives the per-iteration
/// noise estimates for iterations `0..=t_max` (length `t_max + 1`).
///
/// # Safety
/// Strings must be NUL-terminated or NULL as documented; buffers must have the
/// stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ampud_reconstruct(
    sys: *const AmpudSystem,
    denoiser_json: *const c_char,
    source_json: *const c_char,
    t_max: usize,
    lambda: f64,
    out_x: *mut f64,
    out_sigma_hat_sq: *mut f64,
) -> AmpudStatus {
    guard(|| {
        let sys = sys.as_ref().ok_or_else(|| null("sys"))?;
        let spec: DenoiserSpec = serde_json::from_str(text(denoiser_json, "denoiser_json")?)?;
        let source = if source_json.is_null() {
            SignalSource::Gaussian { variance: 1.0 }
        } else {
            serde_json::from_str(text(source_json, "source_json")?)?
        };
        let out = slice_mut(out_x, sys.0.n(), "out_x")?;
        let denoiser = spec.build(&source)?;
        let cfg = AmpConfig { t_max, lambda, damp_onsager: false };
        let run = amp::run(&sys.0, denoiser.as_ref(), &cfg, None).map_err(|f| Failure::from(f.error))?;
        out.copy_from_slice(&run.state.x);
        if !out_sigma_hat_sq.is_null() {
            slice_mut(out_sigma_hat_sq, t_max + 1, "out_sigma_hat_sq")?.copy_from_slice(&run.trace.sigma_hat_sq());
        }
        Ok(())
    })
}

/// Mixture from `s` weights, means and variances. Weights must sum to one.
///
/// # Safety
/// The three arrays must hold `s` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampud_mixture_new(
    alpha: *const f64,
    mu: *const f64,
    sigma_sq: *const f64,
    s: usize,
    out: *mut *mut AmpudMixture,
) -> AmpudStatus {
    guard(|| {
        let (a, m, v) = (slice(alpha, s, "alpha")?, slice(mu, s, "mu")?, slice(sigma_sq, s, "sigma_sq")?);
        let comps = (0..s).map(|i| Component { alpha: a[i], mu: m[i], sigma_sq: v[i] }).collect();
        write_handle(out, AmpudMixture(GaussianMixture::new(comps)?))
    })
}

/// Fit a mixture prior to `n` noisy observations `q = x + N(0, sigma_v_sq)`.
/// `em_json` tunes the fit and may be NULL for defaults.
///
/// # Safety
/// `q` must hold `n` values, `em_json` must be NULL or NUL-terminated and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ampud_mixture_fit(
    q: *const f64,
    n: usize,
    sigma_v_sq: f64,
    em_json: *const c_char,
    out: *mut *mut AmpudMixture,
) -> AmpudStatus {
    guard(|| {
        let em: EmConfig = json_or_default(em_json, "em_json")?;
        let (prior, _) = fit_prior(slice(q, n, "q")?, sigma_v_sq, &em)?;
        write_handle(out, AmpudMixture(prior))
    })
}

/// Number of components.
///
/// # Safety
/// `mix` must be a live handle and `out_s` writable.
#[no_mangle]
pub unsafe extern "C" fn ampud_mixture_len(mix: *const AmpudMixture, out_s: *mut usize) -> AmpudStatus {
    guard(|| {
        let mix = mix.as_ref().ok_or_else(|| null("mix"))?;
        *out_s.as_mut().ok_or_else(|| null("out_s"))? = mix.0.len();
        Ok(())
    })
}

/// Copy the components out; each array must hold `ampud_mixture_len` values.
///
/// # Safety
/// `mix` must be a live handle and the arrays large enough.
#[no_mangle]
pub unsafe extern "C" fn ampud_mixture_components(
    mix: *const AmpudMixture,
    out_alpha: *mut f64,
    out_mu: *mut f64,
    out_sigma_sq: *mut f64,
) -> AmpudStatus {
    guard(|| {
        let mix = mix.as_ref().ok_or_else(|| null("mix"))?;
        let s = mix.0.len();
        let (a, m, v) = (
            slice_mut(out_alpha, s, "out_alpha")?,
            slice_mut(out_mu, s, "out_mu")?,
            slice_mut(out_sigma_sq, s, "out_sigma_sq")?,
        );
        for (i, c) in mix.0.components().iter().enumerate() {
            (a[i], m[i], v[i]) = (c.alpha, c.mu, c.sigma_sq);
        }
        Ok(())
    })
}

/// # Safety
/// `mix` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ampud_mixture_free(mix: *mut AmpudMixture) {
    if !mix.is_null() {
        drop(Box::from_raw(mix));
    }
}

/// Posterior mean of each `q[i]` under the mixture prior with Gaussian noise of
/// variance `sigma_v_sq`. `out_deriv` may be NULL.
///
/// # Safety
/// `q`, `out_x` and a non-NULL `out_deriv` must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn ampud_mixture_denoise(
    mix: *const AmpudMixture,
    sigma_v_sq: f64,
    q: *const f64,
    n: usize,
    out_x: *mut f64,
    out_deriv: *mut f64,
) -> AmpudStatus {
    guard(|| {
        let mix = mix.as_ref().ok_or_else(|| null("mix"))?;
        let d = GmDenoiser::new(mix.0.clone(), sigma_v_sq)?;
        let (q, x) = (slice(q, n, "q")?, slice_mut(out_x, n, "out_x")?);
        let mut deriv = if out_deriv.is_null() { None } else { Some(slice_mut(out_deriv, n, "out_deriv")?) };
        for i in 0..n {
            let (e, de) = d.eval(q[i]);
            x[i] = e;
            if let Some(dv) = deriv.as_deref_mut() {
                dv[i] = de;
            }
        }
        Ok(())
    })
}

/// Denoise a sequence observed in Gaussian noise of variance `sigma_v_sq`
/// with the universal context-clustering denoiser. `cfg_json` may be NULL for
/// defaults. `out_mean_deriv` may be NULL.
///
/// # Safety
/// `q` and `out_x` must hold `n` values; `cfg_json` must be NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ampud_universal_denoise(
    q: *const f64,
    n: usize,
    sigma_v_sq: f64,
    cfg_json: *const c_char,
    out_x: *mut f64,
    out_mean_deriv: *mut f64,
) -> AmpudStatus {
    guard(|| {
        let cfg: UniversalConfig = json_or_default(cfg_json, "cfg_json")?;
        let (res, _) = denoise_universal(slice(q, n, "q")?, sigma_v_sq, &cfg)?;
        slice_mut(out_x, n, "out_x")?.copy_from_slice(&res.x_hat);
        if let Some(d) = out_mean_deriv.as_mut() {
            *d = res.mean_deriv;
        }
        Ok(())
    })
}

