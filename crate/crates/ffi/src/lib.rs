//! C ABI over `volterra-smile`.
//!
//! Objects are exposed as opaque handles created by `*_new` and released by
//! the matching `*_free`. Every fallible call returns a [`VsStatus`]; on
//! failure the message is available from [`vs_last_error`] on the same
//! thread. Panics never cross the boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use volterra_smile::bs::{bs_price, implied_vol, BSQuote, OptionKind};
use volterra_smile::gauss_sim::{build_sampler, sample_paths, JointGaussianSampler, PathGrid};
use volterra_smile::kernels::{covariance, limit_kernel, speed_gamma, Kernel, KernelFamily, KernelSpec};
use volterra_smile::pricing::{mc_option_price, MCConfig, ModelParams};
use volterra_smile::ratefn::{asymptotic_smile, md_coefficients, rate_function, RitzConfig};
use volterra_smile::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Factorization = 3,
    LengthMismatch = 4,
    NoArbitrage = 5,
    Bracket = 6,
    DegenerateDenominator = 7,
    Config = 8,
    Io = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsKernelFamily {
    Fbm = 0,
    Rl = 1,
    Fou = 2,
    LogFbm = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsOptionKind {
    Call = 0,
    Put = 1,
}

/// Moderate-deviation coefficients and the kernel inner products behind them.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VsMdCoefficients {
    pub k1_mean: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2_half: f64,
}

/// Kernel handle.
pub struct VsKernel {
    kernel: Kernel,
}

/// Model parameters handle (exponential volatility map).
pub struct VsModel {
    model: ModelParams,
}

/// Joint Gaussian sampler handle for `(V, B)` on a uniform grid.
pub struct VsSampler {
    sampler: JointGaussianSampler,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> VsStatus {
    match e {
        Error::Domain(_) => VsStatus::Domain,
        Error::Factorization { .. } => VsStatus::Factorization,
        Error::LengthMismatch { .. } => VsStatus::LengthMismatch,
        Error::NoArbitrageViolation { .. } => VsStatus::NoArbitrage,
        Error::Bracket { .. } => VsStatus::Bracket,
        Error::DegenerateDenominator(_) => VsStatus::DegenerateDenominator,
        Error::Config(_) => VsStatus::Config,
        Error::Io(_) => VsStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> VsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            VsStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            VsStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            VsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn write<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(v);
    Ok(())
}

fn kind_of(k: VsOptionKind) -> OptionKind {
    match k {
        VsOptionKind::Call => OptionKind::Call,
        VsOptionKind::Put => OptionKind::Put,
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vs_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Creates a kernel. Unused parameters are ignored: `a` for FOU, `c` for RL
/// and LOGFBM, `p` for LOGFBM.
#[no_mangle]
pub unsafe extern "C" fn vs_kernel_new(
    family: VsKernelFamily,
    hurst: f64,
    a: f64,
    c: f64,
    p: f64,
    quad_n: usize,
    out: *mut *mut VsKernel,
) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let spec = match family {
            VsKernelFamily::Fbm => KernelSpec::fbm(hurst),
            VsKernelFamily::Rl => KernelSpec::rl(c, hurst),
            VsKernelFamily::Fou => KernelSpec::fou(hurst, a),
            VsKernelFamily::LogFbm => KernelSpec::log_fbm(c, hurst, p),
        };
        let kernel = Kernel::with_quad(spec, quad_n.max(16))?;
        *out = Box::into_raw(Box::new(VsKernel { kernel }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vs_kernel_free(kernel: *mut VsKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

#[no_mangle]
pub unsafe extern "C" fn vs_kernel_family(kernel: *const VsKernel, out: *mut VsKernelFamily) -> VsStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        let fam = match k.kernel.spec().family {
            KernelFamily::Fbm => VsKernelFamily::Fbm,
            KernelFamily::Rl => VsKernelFamily::Rl,
            KernelFamily::Fou => VsKernelFamily::Fou,
            KernelFamily::LogFbm => VsKernelFamily::LogFbm,
        };
        write(out, fam, "out")
    })
}

/// `K(t, s)` for `0 <= s < t <= 1`.
#[no_mangle]
pub unsafe extern "C" fn vs_kernel_eval(kernel: *const VsKernel, t: f64, s: f64, out: *mut f64) -> VsStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        write(out, k.kernel.eval(t, s)?, "out")
    })
}

/// `∫_0^{min(t,s)} K(t,u) K(s,u) du`.
#[no_mangle]
pub unsafe extern "C" fn vs_kernel_covariance(
    kernel: *const VsKernel,
    t: f64,
    s: f64,
    quad_n: usize,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        write(out, covariance(k.kernel.spec(), t, s, quad_n)?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn vs_speed_gamma(kernel: *const VsKernel, eps: f64, out: *mut f64) -> VsStatus {
    guard(|| {
        let k = deref(kernel, "kernel")?;
        write(out, speed_gamma(k.kernel.spec(), eps)?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn vs_model_new(rho: f64, sigma0: f64, eta: f64, out: *mut *mut VsModel) -> VsStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let model = ModelParams::new(rho, sigma0, eta)?;
        *out = Box::into_raw(Box::new(VsModel { model }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vs_model_free(model: *mut VsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[no_mangle]
pub unsafe extern "C" fn vs_bs_price(t: f64, k: f64, sigma: f64, kind: VsOptionKind, out: *mut f64) -> VsStatus {
    guard(|| write(out, bs_price(&BSQuote { t, k, sigma, kind: kind_of(kind) }), "out"))
}

#[no_mangle]
pub unsafe extern "C" fn vs_implied_vol(price: f64, t: f64, k: f64, kind: VsOptionKind, out: *mut f64) -> VsStatus {
    guard(|| write(out, implied_vol(price, t, k, kind_of(kind))?, "out"))
}

/// Monte Carlo price of a European option at maturity `t` and log-strike `k`.
#[no_mangle]
pub unsafe extern "C" fn vs_mc_option_price(
    kernel: *const VsKernel,
    model: *const VsModel,
    paths: usize,
    steps: usize,
    seed: u64,
    antithetic: bool,
    t: f64,
    k: f64,
    kind: VsOptionKind,
    out_price: *mut f64,
    out_stderr: *mut f64,
) -> VsStatus {
    guard(|| {
        let ker = deref(kernel, "kernel")?;
        let m = deref(model, "model")?;
        if out_price.is_null() || out_stderr.is_null() {
            return Err(Failure::Null("out"));
        }
        let mc = MCConfig { paths, steps, seed, antithetic, ..MCConfig::default() };
        let est = mc_option_price(ker.kernel.spec(), &m.model, &mc, t, k, kind_of(kind))?;
        write(out_price, est.price, "out_price")?;
        write(out_stderr, est.stderr, "out_stderr")
    })
}

/// Rate function `J(x)` of the limit kernel of `kernel`, Ritz method with
/// `basis_n` Fourier modes.
#[no_mangle]
pub unsafe extern "C" fn vs_rate_function(
    model: *const VsModel,
    kernel: *const VsKernel,
    x: f64,
    basis_n: usize,
    quad_n: usize,
    out_j: *mut f64,
    out_converged: *mut bool,
) -> VsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let ker = deref(kernel, "kernel")?;
        if out_j.is_null() || out_converged.is_null() {
            return Err(Failure::Null("out"));
        }
        let cfg = RitzConfig { basis_n, quad_n, ..RitzConfig::default() };
        let khat = limit_kernel(ker.kernel.spec())?;
        let r = rate_function(x, &m.model, &khat, &cfg)?;
        write(out_j, r.j, "out_j")?;
        write(out_converged, r.converged, "out_converged")
    })
}

/// Short-time implied volatility `|x| / sqrt(2 J(x))`, `x != 0`.
#[no_mangle]
pub unsafe extern "C" fn vs_asymptotic_smile(
    model: *const VsModel,
    kernel: *const VsKernel,
    x: f64,
    out: *mut f64,
) -> VsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let ker = deref(kernel, "kernel")?;
        write(out, asymptotic_smile(x, &m.model, ker.kernel.spec(), &RitzConfig::default())?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn vs_md_coefficients(
    model: *const VsModel,
    hurst: f64,
    quad_n: usize,
    out: *mut VsMdCoefficients,
) -> VsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let c = md_coefficients(&m.model, hurst, quad_n)?;
        let p = c.inner;
        write(
            out,
            VsMdCoefficients {
                k1_mean: p.k1_mean,
                a: p.a,
                b: p.b,
                c: p.c,
                j2: c.j2,
                j3: c.j3,
                j4: c.j4,
                sigma0: c.sigma0,
                sigma1: c.sigma1,
                sigma2_half: c.sigma2_half,
            },
            "out",
        )
    })
}

/// Sampler for `(V_{t_k}, B_{t_k})`, `t_k = k t / steps`, `k = 1..steps`.
#[no_mangle]
pub unsafe extern "C" fn vs_sampler_new(
    kernel: *const VsKernel,
    maturity: f64,
    steps: usize,
    quad_n: usize,
    out: *mut *mut VsSampler,
) -> VsStatus {
    guard(|| {
        let ker = deref(kernel, "kernel")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let sampler = build_sampler(ker.kernel.spec(), PathGrid::new(maturity, steps)?, quad_n)?;
        *out = Box::into_raw(Box::new(VsSampler { sampler }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn vs_sampler_free(sampler: *mut VsSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Number of time steps of the sampler grid.
#[no_mangle]
pub unsafe extern "C" fn vs_sampler_steps(sampler: *const VsSampler, out: *mut usize) -> VsStatus {
    guard(|| {
        let s = deref(sampler, "sampler")?;
        write(out, s.sampler.grid().steps, "out")
    })
}

/// Draws `m` paths into row-major `m x steps` buffers `v_out` and `b_out`,
/// each of length `len`.
#[no_mangle]
pub unsafe extern "C" fn vs_sampler_sample(
    sampler: *const VsSampler,
    seed: u64,
    m: usize,
    v_out: *mut f64,
    b_out: *mut f64,
    len: usize,
) -> VsStatus {
    guard(|| {
        let s = deref(sampler, "sampler")?;
        if v_out.is_null() || b_out.is_null() {
            return Err(Failure::Null("v_out/b_out"));
        }
        let need = m * s.sampler.grid().steps;
        if len != need {
            return Err(Error::LengthMismatch { expected: need, got: len }.into());
        }
        let batch = sample_paths(&s.sampler, seed, m)?;
        let v = std::slice::from_raw_parts_mut(v_out, len);
        let b = std::slice::from_raw_parts_mut(b_out, len);
        for (dst, src) in v.iter_mut().zip(batch.v.iter()) {
            *dst = *src;
        }
        for (dst, src) in b.iter_mut().zip(batch.b.iter()) {
            *dst = *src;
        }
        Ok(())
    })
}
