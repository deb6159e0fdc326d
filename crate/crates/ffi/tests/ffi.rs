use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use volterra_smile_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vs_last_error()) }.to_string_lossy().into_owned()
}

fn kernel(family: VsKernelFamily, h: f64, a: f64) -> *mut VsKernel {
    let mut k = ptr::null_mut();
    let st = unsafe { vs_kernel_new(family, h, a, 1.0, 1.0, 64, &mut k) };
    assert_eq!(st, VsStatus::Ok, "{}", last_error());
    assert!(!k.is_null());
    k
}

fn model(rho: f64, sigma0: f64, eta: f64) -> *mut VsModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { vs_model_new(rho, sigma0, eta, &mut m) }, VsStatus::Ok);
    m
}

#[test]
fn kernel_roundtrip() {
    let k = kernel(VsKernelFamily::Fbm, 0.5, 0.0);
    let mut v = 0.0;
    assert_eq!(unsafe { vs_kernel_eval(k, 0.7, 0.2, &mut v) }, VsStatus::Ok);
    assert!((v - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { vs_kernel_covariance(k, 0.3, 0.8, 128, &mut v) }, VsStatus::Ok);
    assert!((v - 0.3).abs() < 1e-10);
    let mut fam = VsKernelFamily::Rl;
    assert_eq!(unsafe { vs_kernel_family(k, &mut fam) }, VsStatus::Ok);
    assert_eq!(fam, VsKernelFamily::Fbm);
    assert_eq!(unsafe { vs_speed_gamma(k, 0.01, &mut v) }, VsStatus::Ok);
    assert!((v - 0.1).abs() < 1e-15);
    unsafe { vs_kernel_free(k) };
}

#[test]
fn domain_errors_carry_status_and_message() {
    let mut k = ptr::null_mut();
    let st = unsafe { vs_kernel_new(VsKernelFamily::Fbm, 1.5, 0.0, 1.0, 1.0, 64, &mut k) };
    assert_eq!(st, VsStatus::Domain);
    assert!(k.is_null());
    assert!(last_error().contains("H"), "{}", last_error());

    let k = kernel(VsKernelFamily::Fou, 0.3, 1.0);
    let mut v = 0.0;
    assert_eq!(unsafe { vs_kernel_eval(k, 0.2, 0.5, &mut v) }, VsStatus::Domain);
    assert_eq!(unsafe { vs_kernel_eval(k, 0.5, 0.2, &mut v) }, VsStatus::Ok);
    assert!(last_error().is_empty());
    unsafe { vs_kernel_free(k) };
}

#[test]
fn null_pointers_are_rejected() {
    let mut v = 0.0;
    assert_eq!(unsafe { vs_kernel_eval(ptr::null(), 0.5, 0.2, &mut v) }, VsStatus::NullPointer);
    let k = kernel(VsKernelFamily::Fbm, 0.3, 0.0);
    assert_eq!(unsafe { vs_kernel_eval(k, 0.5, 0.2, ptr::null_mut()) }, VsStatus::NullPointer);
    assert_eq!(unsafe { vs_model_new(0.0, 0.2, 0.0, ptr::null_mut()) }, VsStatus::NullPointer);
    unsafe {
        vs_kernel_free(k);
        vs_kernel_free(ptr::null_mut());
        vs_model_free(ptr::null_mut());
        vs_sampler_free(ptr::null_mut());
    }
}

#[test]
fn black_scholes_roundtrip_and_band() {
    let mut p = 0.0;
    let mut iv = 0.0;
    assert_eq!(unsafe { vs_bs_price(0.25, 0.1, 0.3, VsOptionKind::Call, &mut p) }, VsStatus::Ok);
    assert_eq!(unsafe { vs_implied_vol(p, 0.25, 0.1, VsOptionKind::Call, &mut iv) }, VsStatus::Ok);
    assert!((iv - 0.3).abs() < 1e-10);
    assert_eq!(unsafe { vs_implied_vol(2.0, 0.25, 0.1, VsOptionKind::Call, &mut iv) }, VsStatus::NoArbitrage);
}

#[test]
fn rate_function_and_md() {
    let m = model(-0.7, 0.2, 0.0);
    let k = kernel(VsKernelFamily::Fou, 0.3, 1.0);
    let (mut j, mut conv) = (0.0, false);
    assert_eq!(unsafe { vs_rate_function(m, k, 0.1, 5, 64, &mut j, &mut conv) }, VsStatus::Ok);
    assert!((j - 0.125).abs() < 1e-3);
    let mut s = 0.0;
    assert_eq!(unsafe { vs_asymptotic_smile(m, k, -0.1, &mut s) }, VsStatus::Ok);
    assert!((s - 0.2).abs() < 1e-3);
    assert_eq!(unsafe { vs_asymptotic_smile(m, k, 0.0, &mut s) }, VsStatus::Domain);

    let m2 = model(-0.7, 0.2, 0.2);
    let mut c = VsMdCoefficients::default();
    assert_eq!(unsafe { vs_md_coefficients(m2, 0.5, 64, &mut c) }, VsStatus::Ok);
    assert!((c.j2 - 25.0).abs() < 1e-12 && (c.j3 - 26.25).abs() < 1e-9);
    unsafe {
        vs_model_free(m);
        vs_model_free(m2);
        vs_kernel_free(k);
    }
}

#[test]
fn sampler_and_pricing() {
    let k = kernel(VsKernelFamily::Fbm, 0.3, 0.0);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { vs_sampler_new(k, 0.5, 10, 64, &mut s) }, VsStatus::Ok);
    let mut n = 0;
    assert_eq!(unsafe { vs_sampler_steps(s, &mut n) }, VsStatus::Ok);
    assert_eq!(n, 10);
    let m = 4;
    let mut v = vec![0.0; m * n];
    let mut b = vec![0.0; m * n];
    let st = unsafe { vs_sampler_sample(s, 9, m, v.as_mut_ptr(), b.as_mut_ptr(), v.len()) };
    assert_eq!(st, VsStatus::Ok);
    assert!(v.iter().all(|x| x.is_finite()) && v.iter().any(|&x| x != 0.0));
    let st = unsafe { vs_sampler_sample(s, 9, m, v.as_mut_ptr(), b.as_mut_ptr(), v.len() - 1) };
    assert_eq!(st, VsStatus::LengthMismatch);

    let md = model(-0.7, 0.2, 0.0);
    let (mut price, mut se) = (0.0, 0.0);
    let st = unsafe {
        vs_mc_option_price(k, md, 4000, 20, 3, false, 0.25, 0.0, VsOptionKind::Call, &mut price, &mut se)
    };
    assert_eq!(st, VsStatus::Ok, "{}", last_error());
    let mut bs = 0.0;
    unsafe { vs_bs_price(0.25, 0.0, 0.2, VsOptionKind::Call, &mut bs) };
    assert!((price - bs).abs() < 4.0 * se, "{price} vs {bs} ± {se}");
    unsafe {
        vs_sampler_free(s);
        vs_kernel_free(k);
        vs_model_free(md);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(vs_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn header_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("volterra_smile.h")
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["typedef struct VsKernel VsKernel;", "VS_STATUS_OK = 0", "VS_OPTION_KIND_PUT = 1"] {
        assert!(header.contains(ty), "{ty}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header_path())
        .output()
    else {
        eprintln!("no C compiler on PATH; header syntax not checked");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
