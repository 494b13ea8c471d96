use std::ffi::{CStr, CString};
use std::ptr;

use ampud_ffi::*;
use rand_distr::{Distribution, StandardNormal};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ampud_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(ampud_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generate_and_reconstruct() {
    let (n, m, t) = (500, 250, 20);
    let mut sys = ptr::null_mut();
    let mut x = vec![0.0; n];
    let src = c(r#"{"kind":"sparse_laplace"}"#);
    let st = unsafe { ampud_system_generate(src.as_ptr(), n, m, 20.0, 7, &mut sys, x.as_mut_ptr()) };
    assert_eq!(st, AmpudStatus::Ok);
    let (mut mm, mut nn) = (0, 0);
    assert_eq!(unsafe { ampud_system_dims(sys, &mut mm, &mut nn) }, AmpudStatus::Ok);
    assert_eq!((mm, nn), (m, n));

    let den = c(r#"{"kind":"sparse_laplace_bayes"}"#);
    let mut xhat = vec![0.0; n];
    let mut sig = vec![0.0; t + 1];
    let st = unsafe {
        ampud_reconstruct(sys, den.as_ptr(), ptr::null(), t, 1.0, xhat.as_mut_ptr(), sig.as_mut_ptr())
    };
    assert_eq!(st, AmpudStatus::Ok, "{}", last_error());
    assert!(ampud_last_error().is_null());
    let err: f64 = x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let energy: f64 = x.iter().map(|a| a * a).sum();
    assert!(err < 0.1 * energy, "relative error {}", err / energy);
    assert!(sig[t] < sig[0]);
    unsafe { ampud_system_free(sys) };
}

#[test]
fn explicit_system_validates_noise() {
    let a = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let y = [1.0, 2.0];
    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { ampud_system_new(a.as_ptr(), 2, 3, y.as_ptr(), 0.01, &mut sys) }, AmpudStatus::Ok);
    unsafe { ampud_system_free(sys) };

    let mut sys = ptr::null_mut();
    let st = unsafe { ampud_system_new(a.as_ptr(), 2, 3, y.as_ptr(), -1.0, &mut sys) };
    assert_eq!(st, AmpudStatus::InvalidArgument);
    assert!(last_error().contains("noise variance"));
    assert!(sys.is_null());
}

#[test]
fn mixture_round_trip_and_denoise() {
    let (a, mu, v) = ([0.5, 0.5], [-1.0, 1.0], [0.0, 0.0]);
    let mut mix = ptr::null_mut();
    assert_eq!(unsafe { ampud_mixture_new(a.as_ptr(), mu.as_ptr(), v.as_ptr(), 2, &mut mix) }, AmpudStatus::Ok);
    let mut s = 0;
    assert_eq!(unsafe { ampud_mixture_len(mix, &mut s) }, AmpudStatus::Ok);
    assert_eq!(s, 2);
    let (mut oa, mut om, mut ov) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    let st = unsafe { ampud_mixture_components(mix, oa.as_mut_ptr(), om.as_mut_ptr(), ov.as_mut_ptr()) };
    assert_eq!(st, AmpudStatus::Ok);
    assert_eq!((oa, om, ov), (a, mu, v));

    let q = [-2.0, 0.0, 0.7];
    let (mut x, mut d) = ([0.0; 3], [0.0; 3]);
    let sv: f64 = 0.5;
    let st = unsafe { ampud_mixture_denoise(mix, sv, q.as_ptr(), 3, x.as_mut_ptr(), d.as_mut_ptr()) };
    assert_eq!(st, AmpudStatus::Ok);
    for i in 0..3 {
        let t = (q[i] / sv).tanh();
        assert!((x[i] - t).abs() < 1e-12);
        assert!((d[i] - (1.0 - t * t) / sv).abs() < 1e-10);
    }
    unsafe { ampud_mixture_free(mix) };
}

#[test]
fn mixture_fit_finds_two_clusters() {
    let n = 4000;
    let q: Vec<f64> = (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / (n / 2) as f64;
            let jitter = 0.4 * (u * 37.0).sin();
            if i % 2 == 0 { -3.0 + jitter } else { 3.0 + jitter }
        })
        .collect();
    let mut mix = ptr::null_mut();
    let st = unsafe { ampud_mixture_fit(q.as_ptr(), n, 0.01, ptr::null(), &mut mix) };
    assert_eq!(st, AmpudStatus::Ok, "{}", last_error());
    let mut s = 0;
    unsafe { ampud_mixture_len(mix, &mut s) };
    assert_eq!(s, 2);
    unsafe { ampud_mixture_free(mix) };
}

#[test]
fn universal_denoise_shrinks_noise() {
    let n = 3000;
    let mut x = vec![0.0; n];
    let src = c(r#"{"kind":"mrad"}"#);
    assert_eq!(unsafe { ampud_signal_generate(src.as_ptr(), n, 3, x.as_mut_ptr()) }, AmpudStatus::Ok);
    let sv: f64 = 0.25;
    let mut r = ampud::rng::rng(4);
    let q: Vec<f64> = x
        .iter()
        .map(|v| {
            let g: f64 = StandardNormal.sample(&mut r);
            v + sv.sqrt() * g
        })
        .collect();
    let mut out = vec![0.0; n];
    let mut der = f64::NAN;
    let cfg = c(r#"{"l_init":4}"#);
    let st = unsafe { ampud_universal_denoise(q.as_ptr(), n, sv, cfg.as_ptr(), out.as_mut_ptr(), &mut der) };
    assert_eq!(st, AmpudStatus::Ok, "{}", last_error());
    let mse = |a: &[f64]| a.iter().zip(&x).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / n as f64;
    assert!(mse(&out) < mse(&q));
    assert!(der.is_finite() && der > 0.0);
}

#[test]
fn errors_are_reported() {
    let mut sys = ptr::null_mut();
    let bad = c(r#"{"kind":"nope"}"#);
    let st = unsafe { ampud_system_generate(bad.as_ptr(), 10, 5, 10.0, 1, &mut sys, ptr::null_mut()) };
    assert_eq!(st, AmpudStatus::Parse);
    assert!(last_error().contains("nope"));

    let st = unsafe { ampud_system_generate(ptr::null(), 10, 5, 10.0, 1, &mut sys, ptr::null_mut()) };
    assert_eq!(st, AmpudStatus::NullPointer);

    let (a, mu, v) = ([0.7, 0.7], [0.0, 1.0], [1.0, 1.0]);
    let mut mix = ptr::null_mut();
    let st = unsafe { ampud_mixture_new(a.as_ptr(), mu.as_ptr(), v.as_ptr(), 2, &mut mix) };
    assert_eq!(st, AmpudStatus::InvalidArgument);
    assert!(mix.is_null());

    let src = c(r#"{"kind":"gaussian","variance":1.0}"#);
    unsafe { ampud_system_generate(src.as_ptr(), 20, 10, 10.0, 1, &mut sys, ptr::null_mut()) };
    let den = c(r#"{"kind":"window_mconst","k":1}"#);
    let mut out = vec![0.0; 20];
    let st = unsafe { ampud_reconstruct(sys, den.as_ptr(), ptr::null(), 5, 1.0, out.as_mut_ptr(), ptr::null_mut()) };
    assert_eq!(st, AmpudStatus::InvalidArgument);
    unsafe { ampud_system_free(sys) };
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ampud.h")).unwrap();
    for name in [
        "ampud_last_error",
        "ampud_version",
        "ampud_signal_generate",
        "ampud_system_new",
        "ampud_system_generate",
        "ampud_system_dims",
        "ampud_system_free",
        "ampud_reconstruct",
        "ampud_mixture_new",
        "ampud_mixture_fit",
        "ampud_mixture_len",
        "ampud_mixture_components",
        "ampud_mixture_free",
        "ampud_mixture_denoise",
        "ampud_universal_denoise",
        "AMPUD_STATUS_OK",
        "typedef struct AmpudSystem AmpudSystem",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "ampud.h"
int demo(void) {
    AmpudSystem *sys = NULL;
    double x[8];
    if (ampud_system_generate("{\"kind\":\"sparse_laplace\"}", 8, 4, 10.0, 1, &sys, x) != AMPUD_STATUS_OK)
        return 1;
    AmpudStatus st = ampud_reconstruct(sys, "{\"kind\":\"gm_iid\"}", NULL, 5, 1.0, x, NULL);
    ampud_system_free(sys);
    return st == AMPUD_STATUS_OK ? 0 : (int)st;
}
"#,
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-c", "-I", include, "-o"])
        .arg(dir.path().join("use.o"))
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => return,
    };
    assert!(status.success());
}
