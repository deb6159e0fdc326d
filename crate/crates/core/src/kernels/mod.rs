//! Volterra kernels `K(t,s)` for the fBM, Riemann–Liouville, fractional
//! Ornstein–Uhlenbeck and log-modulated families, their short-time scalings
//! `K^n(t,s) = √ε K(εt, εs)` and the associated covariances.

mod diagnostics;
mod fbm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};
use crate::quadrature::{Endpoints, Rule};

pub use diagnostics::{check_k1, check_k2, estimate_a1, run_diagnostics, DiagnosticsReport};
#[cfg(test)]
pub(crate) use fbm::c_h;

/// Time horizon on which all kernels are defined.
pub const HORIZON: f64 = 1.0;

/// Default resolution of the FOU correction integral.
pub const DEFAULT_QUAD_N: usize = 64;

const TIME_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelFamily {
    Fbm,
    Rl,
    Fou,
    LogFbm,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Fbm => "FBM",
            KernelFamily::Rl => "RL",
            KernelFamily::Fou => "FOU",
            KernelFamily::LogFbm => "LOGFBM",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FBM" => Ok(KernelFamily::Fbm),
            "RL" => Ok(KernelFamily::Rl),
            "FOU" => Ok(KernelFamily::Fou),
            "LOGFBM" | "LOG-FBM" => Ok(KernelFamily::LogFbm),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Parameters of one kernel family. Fields that a family does not use are
/// ignored by it (`a` outside FOU, `C` for FBM/FOU, `p` outside LOGFBM).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub hurst: f64,
    /// Mean-reversion rate `a` (FOU).
    pub mean_reversion: f64,
    /// Scale constant `C` (RL, LOGFBM).
    pub scale: f64,
    /// Log-modulation exponent `p` (LOGFBM).
    pub log_power: f64,
}

impl KernelSpec {
    pub fn fbm(hurst: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Fbm,
            hurst,
            mean_reversion: 0.0,
            scale: 1.0,
            log_power: 0.0,
        }
    }

    pub fn rl(scale: f64, hurst: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rl,
            scale,
            ..KernelSpec::fbm(hurst)
        }
    }

    pub fn fou(hurst: f64, mean_reversion: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Fou,
            mean_reversion,
            ..KernelSpec::fbm(hurst)
        }
    }

    pub fn log_fbm(scale: f64, hurst: f64, log_power: f64) -> Self {
        KernelSpec {
            family: KernelFamily::LogFbm,
            scale,
            log_power,
            ..KernelSpec::fbm(hurst)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hurst;
        match self.family {
            KernelFamily::Fbm | KernelFamily::Fou | KernelFamily::Rl => {
                if !(h > 0.0 && h < 1.0) {
                    return domain(format!("{}: H={h} outside (0,1)", self.family));
                }
            }
            KernelFamily::LogFbm => {
                if !(0.0..=0.5).contains(&h) {
                    return domain(format!("LOGFBM: H={h} outside [0,1/2]"));
                }
                // square integrability at H = 0 needs 2p > 1
                let p_min = if h == 0.0 { 0.5 } else { 0.0 };
                if !(self.log_power > p_min) || !self.log_power.is_finite() {
                    return domain(format!("LOGFBM: p={} must exceed {p_min}", self.log_power));
                }
            }
        }
        if self.family == KernelFamily::Fou
            && !(self.mean_reversion >= 0.0 && self.mean_reversion.is_finite())
        {
            return domain(format!("FOU: a={} must be >= 0", self.mean_reversion));
        }
        if matches!(self.family, KernelFamily::Rl | KernelFamily::LogFbm)
            && !(self.scale > 0.0 && self.scale.is_finite())
        {
            return domain(format!("{}: C={} must be > 0", self.family, self.scale));
        }
        Ok(())
    }

    /// Short tag used in file names and CSV rows, e.g. `FOU(a=1)`.
    pub fn tag(&self) -> String {
        match self.family {
            KernelFamily::Fbm => "FBM".to_string(),
            KernelFamily::Rl => format!("RL(C={})", self.scale),
            KernelFamily::Fou => format!("FOU(a={})", self.mean_reversion),
            KernelFamily::LogFbm => format!("LOGFBM(p={})", self.log_power),
        }
    }

    /// Plain-text `key=value` block (`family`, `H`, `a`, `C`, `p`).
    pub fn to_config_block(&self) -> String {
        format!(
            "family={}\nH={}\na={}\nC={}\np={}\n",
            self.family, self.hurst, self.mean_reversion, self.scale, self.log_power
        )
    }

    /// Builds a spec from parsed `key=value` pairs. Missing optional keys
    /// take family defaults (`a=0`, `C=1`, `p=1`).
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| -> Result<Option<f64>> {
            pairs
                .get(key)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("kernel key `{key}`: bad number `{v}`")))
                })
                .transpose()
        };
        let family: KernelFamily = pairs
            .get("family")
            .ok_or_else(|| Error::Config("kernel block needs `family`".into()))?
            .parse()?;
        let hurst = get("H")?.ok_or_else(|| Error::Config("kernel block needs `H`".into()))?;
        let spec = KernelSpec {
            family,
            hurst,
            mean_reversion: get("a")?.unwrap_or(0.0),
            scale: get("C")?.unwrap_or(1.0),
            log_power: get("p")?.unwrap_or(1.0),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for line in s.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{line}`")))?;
            pairs.insert(k.trim().to_string(), v.trim().to_string());
        }
        KernelSpec::from_pairs(&pairs)
    }
}

/// Kernel evaluator. Immutable after construction and safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    fbm: Option<fbm::FbmKernel>,
    /// Rule for the FOU correction integral, graded toward its singular end.
    fou_rule: Rule,
    fou_near: Rule,
    fou_far: Rule,
}

impl Kernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        Kernel::with_quad(spec, DEFAULT_QUAD_N)
    }

    pub fn with_quad(spec: KernelSpec, quad_n: usize) -> Result<Self> {
        spec.validate()?;
        let fbm = matches!(spec.family, KernelFamily::Fbm | KernelFamily::Fou)
            .then(|| fbm::FbmKernel::new(spec.hurst));
        Ok(Kernel {
            spec,
            fbm,
            fou_rule: Rule::graded(quad_n, Endpoints::Left),
            fou_near: Rule::graded(16, Endpoints::Left),
            fou_far: Rule::gauss(6),
        })
    }

    /// Riemann–Liouville kernel `C (t-s)^{-1/2}` at `H = 0`, outside the
    /// validated range. Only used for formal skew values of LOGFBM at `H = 0`.
    pub(crate) fn formal_rl(scale: f64, quad_n: usize) -> Self {
        let spec = KernelSpec::rl(scale, 0.0);
        Kernel {
            spec,
            fbm: None,
            fou_rule: Rule::graded(quad_n, Endpoints::Left),
            fou_near: Rule::graded(16, Endpoints::Left),
            fou_far: Rule::gauss(6),
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    fn check_times(&self, t: f64, s: f64) -> Result<()> {
        if !(s >= 0.0 && s < t) {
            return domain(format!("kernel needs 0 <= s < t, got t={t}, s={s}"));
        }
        if t > HORIZON + TIME_SLACK {
            return domain(format!("t={t} beyond horizon {HORIZON}"));
        }
        if self.spec.family == KernelFamily::LogFbm && t - s >= 1.0 {
            return domain(format!("LOGFBM needs t-s < 1, got {}", t - s));
        }
        Ok(())
    }

    /// `K(t,s)` with domain checks.
    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        self.check_times(t, s)?;
        Ok(self.value(t, s))
    }

    /// `K(t,s)` without domain checks; zero for `s >= t`.
    pub(crate) fn value(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let h = self.spec.hurst;
        match self.spec.family {
            KernelFamily::Fbm => self.fbm_kernel().eval(t, s),
            KernelFamily::Rl => self.spec.scale * (t - s).powf(h - 0.5),
            KernelFamily::LogFbm => {
                let d = t - s;
                self.spec.scale * d.powf(h - 0.5) * (-d.ln()).powf(-self.spec.log_power)
            }
            KernelFamily::Fou => {
                let a = self.spec.mean_reversion;
                let base = self.fbm_kernel().eval(t, s);
                if a == 0.0 {
                    return base;
                }
                base - a * self.fou_correction(&self.fou_rule, t, s, s)
            }
        }
    }

    fn fbm_kernel(&self) -> &fbm::FbmKernel {
        self.fbm.as_ref().expect("fbm kernel present for FBM/FOU")
    }

    /// `∫_lo^t e^{-a(t-u)} K_H(u,s) du` with the given rule on `[lo, t]`.
    fn fou_correction(&self, rule: &Rule, t: f64, lo: f64, s: f64) -> f64 {
        let a = self.spec.mean_reversion;
        let k = self.fbm_kernel();
        rule.integrate(lo, t, |u| (-a * (t - u)).exp() * k.eval(u, s))
    }

    /// `K(t_i, u)` for ascending `ts`; entries with `t_i <= u` are zero.
    ///
    /// For FOU the correction integrals are accumulated segment by segment
    /// along `ts`, so a whole column costs about as much as one direct
    /// evaluation at the far end.
    pub fn column(&self, u: f64, ts: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; ts.len()];
        let start = ts.partition_point(|&t| t <= u);
        if self.spec.family != KernelFamily::Fou || self.spec.mean_reversion == 0.0 {
            for (o, &t) in out[start..].iter_mut().zip(&ts[start..]) {
                *o = self.value(t, u);
            }
            return out;
        }
        let a = self.spec.mean_reversion;
        let k = self.fbm_kernel();
        let mut acc = 0.0;
        let mut prev = u;
        for (i, &t) in ts.iter().enumerate().skip(start) {
            let rule = match i - start {
                0 => &self.fou_rule,
                1 => &self.fou_near,
                _ => &self.fou_far,
            };
            acc = (-a * (t - prev)).exp() * acc + self.fou_correction(rule, t, prev, u);
            out[i] = k.eval(t, u) - a * acc;
            prev = t;
        }
        out
    }

    /// Covariance `∫_0^{s∧t} K(t,u) K(s,u) du` with the given resolution.
    pub fn covariance(&self, t: f64, s: f64, quad_n: usize) -> Result<f64> {
        for x in [t, s] {
            if !(0.0..=HORIZON + TIME_SLACK).contains(&x) {
                return domain(format!("covariance time {x} outside [0, {HORIZON}]"));
            }
        }
        if self.spec.family == KernelFamily::LogFbm && t.max(s) >= 1.0 {
            return domain("LOGFBM covariance needs t < 1");
        }
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        if lo == 0.0 {
            return Ok(0.0);
        }
        let rule = Rule::graded(quad_n, Endpoints::Both);
        Ok(rule.integrate(0.0, lo, |u| self.value(hi, u) * self.value(lo, u)))
    }
}

/// `K(t,s)` for the given spec.
pub fn kernel_eval(spec: &KernelSpec, t: f64, s: f64) -> Result<f64> {
    Kernel::new(*spec)?.eval(t, s)
}

/// Quadrature covariance `E[V_t V_s]`; `quad_n` also sets the FOU inner
/// resolution.
pub fn covariance(spec: &KernelSpec, t: f64, s: f64, quad_n: usize) -> Result<f64> {
    if quad_n < 16 {
        return domain(format!("covariance needs quad_n >= 16, got {quad_n}"));
    }
    Kernel::with_quad(*spec, quad_n)?.covariance(t, s, quad_n)
}

/// Kernel of the time-rescaled process `V^n_t = V_{εt}` in law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledKernelSpec {
    pub base: KernelSpec,
    pub epsilon: f64,
}

/// Evaluator for `K^n(t,s) = √ε K(εt, εs)`.
#[derive(Debug, Clone)]
pub struct ScaledKernel {
    kernel: Kernel,
    epsilon: f64,
}

impl ScaledKernel {
    pub fn new(spec: ScaledKernelSpec, quad_n: usize) -> Result<Self> {
        check_epsilon(spec.epsilon)?;
        Ok(ScaledKernel {
            kernel: Kernel::with_quad(spec.base, quad_n)?,
            epsilon: spec.epsilon,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        if t > HORIZON + TIME_SLACK {
            return domain(format!("t={t} beyond horizon {HORIZON}"));
        }
        let e = self.epsilon;
        Ok(e.sqrt() * self.kernel.eval(e * t, e * s)?)
    }
}

pub fn scaled_kernel_eval(sspec: &ScaledKernelSpec, t: f64, s: f64) -> Result<f64> {
    ScaledKernel::new(*sspec, DEFAULT_QUAD_N)?.eval(t, s)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        domain(format!("epsilon={eps} outside (0,1)"))
    }
}

/// LDP speed normalisation `γ(ε)`: `ε^H`, times `(-log ε)^{-p}` for LOGFBM.
pub fn speed_gamma(spec: &KernelSpec, eps: f64) -> Result<f64> {
    check_epsilon(eps)?;
    let base = eps.powf(spec.hurst);
    Ok(match spec.family {
        KernelFamily::LogFbm => base * (-eps.ln()).powf(-spec.log_power),
        _ => base,
    })
}

/// Limit kernel `K̂` of the rescaled family: FOU → FBM, LOGFBM → RL.
pub fn limit_kernel(spec: &KernelSpec) -> Result<KernelSpec> {
    spec.validate()?;
    match spec.family {
        KernelFamily::Fbm | KernelFamily::Rl => Ok(*spec),
        KernelFamily::Fou => Ok(KernelSpec::fbm(spec.hurst)),
        KernelFamily::LogFbm => {
            if spec.hurst == 0.0 {
                return domain("LOGFBM with H=0 has no short-time LDP and no limit kernel");
            }
            Ok(KernelSpec::rl(spec.scale, spec.hurst))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fbm_cov(h: f64, t: f64, s: f64) -> f64 {
        0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
    }

    #[test]
    fn brownian_kernel_is_one() {
        let spec = KernelSpec::fbm(0.5);
        for &(t, s) in &[(1.0, 0.0), (0.7, 0.2), (0.3, 0.299)] {
            assert_abs_diff_eq!(kernel_eval(&spec, t, s).unwrap(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn fou_without_mean_reversion_is_fbm() {
        let a = kernel_eval(&KernelSpec::fou(0.3, 0.0), 0.8, 0.3).unwrap();
        let b = kernel_eval(&KernelSpec::fbm(0.3), 0.8, 0.3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn riemann_liouville_value() {
        let v = kernel_eval(&KernelSpec::rl(1.0, 0.3), 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.5f64.powf(-0.2), epsilon = 1e-14);
        assert_abs_diff_eq!(v, 1.148698, epsilon = 1e-6);
    }

    #[test]
    fn domain_errors() {
        let k = Kernel::new(KernelSpec::fbm(0.3)).unwrap();
        assert!(k.eval(0.5, 0.5).is_err());
        assert!(k.eval(0.4, 0.5).is_err());
        assert!(k.eval(1.5, 0.5).is_err());
        let lf = Kernel::new(KernelSpec::log_fbm(1.0, 0.2, 1.5)).unwrap();
        assert!(lf.eval(1.0, 0.0).is_err());
        assert!(lf.eval(1.0, 0.01).is_ok());
        assert!(KernelSpec::fbm(1.2).validate().is_err());
        assert!(KernelSpec::fou(0.3, -1.0).validate().is_err());
        assert!(KernelSpec::log_fbm(1.0, 0.6, 1.5).validate().is_err());
        assert!(KernelSpec::log_fbm(1.0, 0.0, 0.4).validate().is_err());
    }

    #[test]
    fn fbm_covariance_known_points() {
        let spec = KernelSpec::fbm(0.3);
        assert_abs_diff_eq!(covariance(&spec, 1.0, 0.5, 128).unwrap(), 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(covariance(&spec, 1.0, 1.0, 128).unwrap(), 1.0, epsilon = 1e-8);
        assert!(covariance(&spec, 1.0, 1.0, 8).is_err());
    }

    #[test]
    fn covariance_is_symmetric() {
        let spec = KernelSpec::fou(0.3, 1.0);
        let a = covariance(&spec, 0.9, 0.4, 64).unwrap();
        let b = covariance(&spec, 0.4, 0.9, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fbm_covariance_grid_various_hurst() {
        for &h in &[0.3, 0.5, 0.7] {
            let spec = KernelSpec::fbm(h);
            for i in 1..=10 {
                for j in 1..=10 {
                    let (t, s) = (i as f64 / 10.0, j as f64 / 10.0);
                    let got = covariance(&spec, t, s, 256).unwrap();
                    assert_abs_diff_eq!(got, fbm_cov(h, t, s), epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn scaled_kernel_self_similarity() {
        let k = Kernel::new(KernelSpec::fbm(0.3)).unwrap();
        let base = k.eval(1.0, 0.5).unwrap();
        let sk = ScaledKernel::new(
            ScaledKernelSpec { base: KernelSpec::fbm(0.3), epsilon: 0.01 },
            64,
        )
        .unwrap();
        let v = sk.eval(1.0, 0.5).unwrap();
        assert!(((v - 0.01f64.powf(0.3) * base) / v).abs() < 1e-13);
    }

    #[test]
    fn scaled_log_fbm_value() {
        let sspec = ScaledKernelSpec { base: KernelSpec::log_fbm(1.0, 0.1, 1.0), epsilon: 0.01 };
        let v = scaled_kernel_eval(&sspec, 1.0, 0.5).unwrap();
        let want = 0.1 * 0.005f64.powf(-0.4) / (-(0.005f64).ln());
        assert_abs_diff_eq!(v, want, epsilon = 1e-14);
        assert_abs_diff_eq!(v, 0.15713, epsilon = 5e-5);
    }

    #[test]
    fn scaled_fou_tends_to_fbm_kernel() {
        let khat = kernel_eval(&KernelSpec::fbm(0.3), 0.8, 0.3).unwrap();
        let mut prev = f64::INFINITY;
        for &eps in &[1e-1, 1e-2, 1e-3, 1e-4] {
            let sspec = ScaledKernelSpec { base: KernelSpec::fou(0.3, 1.0), epsilon: eps };
            let v = scaled_kernel_eval(&sspec, 0.8, 0.3).unwrap() / eps.powf(0.3);
            let err = (v - khat).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn speed_values() {
        assert_abs_diff_eq!(
            speed_gamma(&KernelSpec::fou(0.3, 1.0), 0.04).unwrap(),
            0.38073,
            epsilon = 1e-5
        );
        assert_abs_diff_eq!(
            speed_gamma(&KernelSpec::log_fbm(1.0, 0.1, 1.0), 0.01).unwrap(),
            0.13701,
            epsilon = 1e-5
        );
        assert!(speed_gamma(&KernelSpec::fbm(0.3), 1.0).is_err());
        assert!(speed_gamma(&KernelSpec::fbm(0.3), 0.0).is_err());
    }

    #[test]
    fn limit_kernels() {
        assert_eq!(limit_kernel(&KernelSpec::fou(0.3, 2.0)).unwrap(), KernelSpec::fbm(0.3));
        assert_eq!(
            limit_kernel(&KernelSpec::log_fbm(1.0, 0.2, 1.5)).unwrap(),
            KernelSpec::rl(1.0, 0.2)
        );
        assert_eq!(limit_kernel(&KernelSpec::fbm(0.5)).unwrap(), KernelSpec::fbm(0.5));
        assert!(limit_kernel(&KernelSpec::log_fbm(1.0, 0.0, 1.5)).is_err());
        // kernel evaluation itself stays available at H = 0
        assert!(kernel_eval(&KernelSpec::log_fbm(1.0, 0.0, 1.5), 0.5, 0.1).is_ok());
    }

    #[test]
    fn column_matches_pointwise_fou() {
        let k = Kernel::with_quad(KernelSpec::fou(0.3, 1.5), 128).unwrap();
        let ts: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        let u = 0.1234;
        let col = k.column(u, &ts);
        for (&t, &c) in ts.iter().zip(&col) {
            let direct = k.value(t, u);
            assert_abs_diff_eq!(c, direct, epsilon = 1e-7);
        }
    }

    #[test]
    fn config_block_roundtrip() {
        let spec = KernelSpec::log_fbm(0.8, 0.2, 1.5);
        let back: KernelSpec = spec.to_config_block().parse().unwrap();
        assert_eq!(back, spec);
        let parsed: KernelSpec = "family = fou\nH=0.3 # rough\na=2".parse().unwrap();
        assert_eq!(parsed, KernelSpec { log_power: 1.0, ..KernelSpec::fou(0.3, 2.0) });
        assert!("family=XYZ\nH=0.3".parse::<KernelSpec>().is_err());
    }
}
