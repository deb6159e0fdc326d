//! Short-time rate function by the Ritz method, the asymptotic smile and
//! skew, and the moderate-deviation expansion.
//!
//! The rate function is
//!
//! ```text
//! J(x) = inf_f  ½ ‖f‖² + ½ (x - ρ ∫ σ(f̂) ḟ dt)² / (ρ̄² ∫ σ²(f̂) dt),
//! f̂(t) = ∫_0^t K̂(t,u) ḟ(u) du,
//! ```
//!
//! minimized over `ḟ = Σ c_i ė_i` in the derivative Fourier basis
//! `ė_1 = 1`, `ė_{2n} = √2 cos(2πns)`, `ė_{2n+1} = √2 sin(2πns)`.

mod md;
pub mod optim;

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::kernels::{limit_kernel, Kernel, KernelFamily, KernelSpec};
use crate::pricing::ModelParams;
use crate::quadrature::{Endpoints, Rule};
use optim::{nelder_mead_restarted, NelderMeadOptions};

pub use md::{
    kernel_inner_products, md_coefficients, md_coefficients_for, md_regime, md_smile, InnerProducts,
    MDCoefficients, RegimeWarning,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerControls {
    pub max_iters: usize,
    /// Number of starting points (zero, constant slope, perturbed best).
    pub restarts: usize,
    /// Restarts agreeing within this count as converged.
    pub tolerance: f64,
}

impl Default for OptimizerControls {
    fn default() -> Self {
        OptimizerControls { max_iters: 5000, restarts: 3, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzConfig {
    pub basis_n: usize,
    pub quad_n: usize,
    pub optimizer: OptimizerControls,
    pub continuation: bool,
}

impl Default for RitzConfig {
    fn default() -> Self {
        RitzConfig {
            basis_n: 5,
            quad_n: 128,
            optimizer: OptimizerControls::default(),
            continuation: true,
        }
    }
}

impl RitzConfig {
    pub fn validate(&self) -> Result<()> {
        if self.basis_n < 1 {
            return domain("basis_n must be >= 1");
        }
        if self.quad_n < 16 {
            return domain(format!("ritz quad_n={} below 16", self.quad_n));
        }
        if !(self.optimizer.tolerance > 0.0) {
            return domain("optimizer tolerance must be > 0");
        }
        if self.optimizer.restarts < 1 || self.optimizer.max_iters < 1 {
            return domain("optimizer needs restarts >= 1 and max_iters >= 1");
        }
        Ok(())
    }
}

/// `ė_{i+1}(s)` for zero-based `i`.
pub fn basis_derivative(i: usize, s: f64) -> f64 {
    if i == 0 {
        1.0
    } else if i % 2 == 1 {
        SQRT_2 * (2.0 * PI * ((i + 1) / 2) as f64 * s).cos()
    } else {
        SQRT_2 * (2.0 * PI * (i / 2) as f64 * s).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierPath {
    pub coeffs: Vec<f64>,
}

impl FourierPath {
    pub fn zero(n: usize) -> Self {
        FourierPath { coeffs: vec![0.0; n] }
    }

    /// `‖f‖² = Σ c_i²`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c * basis_derivative(i, s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateValue {
    pub x: f64,
    pub j: f64,
    pub argmin: FourierPath,
    pub converged: bool,
}

pub const RATE_CSV_HEADER: &str = "x,J,converged";

pub fn rate_table_csv(values: &[RateValue]) -> String {
    let mut out = format!("{RATE_CSV_HEADER}\n");
    for v in values {
        let _ = writeln!(out, "{},{:.12e},{}", v.x, v.j, v.converged);
    }
    out
}

fn limit_evaluator(khat: &KernelSpec, quad_n: usize) -> Result<Kernel> {
    match khat.family {
        KernelFamily::Fbm | KernelFamily::Rl => Kernel::with_quad(*khat, quad_n),
        _ => domain(format!("{} is not a limit kernel; use limit_kernel first", khat.family)),
    }
}

/// `f̂(t) = ∫_0^t K̂(t,u) ḟ(u) du`.
pub fn hat_f(path: &FourierPath, t: f64, khat: &KernelSpec, quad_n: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return domain(format!("hat_f needs t in [0,1], got {t}"));
    }
    let k = limit_evaluator(khat, quad_n)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let rule = Rule::graded(quad_n, Endpoints::Both);
    Ok(rule.integrate(0.0, t, |u| k.value(t, u) * path.derivative(u)))
}

/// Discretized Ritz functional: fixed outer nodes `t_j` with `f̂(t_j)` and
/// `ḟ(t_j)` linear in the coefficients.
#[derive(Debug, Clone)]
pub struct RitzProblem {
    model: ModelParams,
    basis_n: usize,
    weights: Vec<f64>,
    /// `a[j][i] = ∫_0^{t_j} K̂(t_j,u) ė_i(u) du`
    a: Vec<Vec<f64>>,
    /// `e[j][i] = ė_i(t_j)`
    e: Vec<Vec<f64>>,
}

impl RitzProblem {
    pub fn new(model: &ModelParams, khat: &KernelSpec, cfg: &RitzConfig) -> Result<Self> {
        let kernel = limit_evaluator(khat, cfg.quad_n)?;
        Self::with_kernel(model, kernel, cfg)
    }

    fn with_kernel(model: &ModelParams, kernel: Kernel, cfg: &RitzConfig) -> Result<Self> {
        cfg.validate()?;
        if !(model.rho_bar > 0.0) {
            return domain("rate function needs |rho| < 1");
        }
        let outer = Rule::graded(cfg.quad_n, Endpoints::Left);
        let inner = Rule::graded(cfg.quad_n, Endpoints::Both);
        let n = cfg.basis_n;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = outer
            .nodes()
            .par_iter()
            .map(|&t| {
                let mut a = vec![0.0; n];
                for (u, w) in inner.mapped(0.0, t) {
                    let kw = w * kernel.value(t, u);
                    for (i, ai) in a.iter_mut().enumerate() {
                        *ai += kw * basis_derivative(i, u);
                    }
                }
                let e = (0..n).map(|i| basis_derivative(i, t)).collect();
                (a, e)
            })
            .collect();
        let (a, e) = rows.into_iter().unzip();
        Ok(RitzProblem {
            model: model.clone(),
            basis_n: n,
            weights: outer.weights().to_vec(),
            a,
            e,
        })
    }

    pub fn basis_n(&self) -> usize {
        self.basis_n
    }

    /// Value of the functional, or the non-positive denominator.
    pub fn objective(&self, coeffs: &[f64], x: f64) -> Result<f64> {
        if coeffs.len() != self.basis_n {
            return Err(Error::LengthMismatch { expected: self.basis_n, got: coeffs.len() });
        }
        let m = &self.model;
        let mut num = 0.0;
        let mut den = 0.0;
        for ((w, a), e) in self.weights.iter().zip(&self.a).zip(&self.e) {
            let fhat: f64 = a.iter().zip(coeffs).map(|(a, c)| a * c).sum();
            let fdot: f64 = e.iter().zip(coeffs).map(|(e, c)| e * c).sum();
            let s = m.sigma(fhat);
            num += w * s * fdot;
            den += w * s * s;
        }
        den *= m.rho_bar * m.rho_bar;
        if !(den > 0.0) {
            return Err(Error::DegenerateDenominator(den));
        }
        let norm: f64 = coeffs.iter().map(|c| c * c).sum();
        let r = x - m.rho * num;
        Ok(0.5 * norm + 0.5 * r * r / den)
    }

    fn penalized(&self, coeffs: &[f64], x: f64) -> f64 {
        match self.objective(coeffs, x) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    /// Multi-start minimization; `warm` adds one more starting point.
    pub fn minimize(&self, x: f64, cfg: &RitzConfig, warm: Option<&[f64]>) -> RateValue {
        let n = self.basis_n;
        if x == 0.0 {
            return RateValue { x, j: 0.0, argmin: FourierPath::zero(n), converged: true };
        }
        let opts = NelderMeadOptions { max_iters: cfg.optimizer.max_iters, ..Default::default() };
        let f = |c: &[f64]| self.penalized(c, x);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(w) = warm.filter(|w| w.len() == n) {
            starts.push(w.to_vec());
        }
        starts.push(vec![0.0; n]);
        let mut slope = vec![0.0; n];
        slope[0] = self.model.rho * x / self.model.sigma(0.0);
        starts.push(slope);

        let budget = cfg.optimizer.restarts + usize::from(warm.is_some());
        let mut results = Vec::new();
        for s in starts.iter().take(budget) {
            results.push(nelder_mead_restarted(f, s, &opts, 2));
        }
        while results.len() < budget {
            let best = results.iter().min_by(|a, b| a.f.total_cmp(&b.f)).expect("at least one start");
            let k = results.len();
            let start: Vec<f64> = best
                .x
                .iter()
                .enumerate()
                .map(|(i, c)| c + 0.05 * if (i + k) % 2 == 0 { 1.0 } else { -1.0 })
                .collect();
            results.push(nelder_mead_restarted(f, &start, &opts, 2));
        }
        let best = results.iter().min_by(|a, b| a.f.total_cmp(&b.f)).expect("at least one start");
        let worst = results.iter().map(|r| r.f).fold(f64::MIN, f64::max);
        let converged = results.iter().all(|r| r.converged) && worst - best.f <= cfg.optimizer.tolerance;
        RateValue {
            x,
            j: best.f.max(0.0),
            argmin: FourierPath { coeffs: best.x.clone() },
            converged,
        }
    }
}

/// Evaluates the functional at a given path.
pub fn energy_objective(path: &FourierPath, x: f64, model: &ModelParams, khat: &KernelSpec, quad_n: usize) -> Result<f64> {
    let cfg = RitzConfig { basis_n: path.coeffs.len().max(1), quad_n, ..Default::default() };
    RitzProblem::new(model, khat, &cfg)?.objective(&path.coeffs, x)
}

/// `J(x)` by multi-start Ritz minimization. `khat` must be FBM or RL.
pub fn rate_function(x: f64, model: &ModelParams, khat: &KernelSpec, cfg: &RitzConfig) -> Result<RateValue> {
    Ok(RitzProblem::new(model, khat, cfg)?.minimize(x, cfg, None))
}

/// `J` on a grid of `x`. With continuation the points are visited outward
/// from the one nearest 0, each warm-started from its neighbour; otherwise
/// they are computed independently in parallel.
pub fn rate_curve(xs: &[f64], model: &ModelParams, khat: &KernelSpec, cfg: &RitzConfig) -> Result<Vec<RateValue>> {
    let problem = RitzProblem::new(model, khat, cfg)?;
    Ok(problem.curve(xs, cfg))
}

impl RitzProblem {
    pub fn curve(&self, xs: &[f64], cfg: &RitzConfig) -> Vec<RateValue> {
        if !cfg.continuation {
            return xs.par_iter().map(|&x| self.minimize(x, cfg, None)).collect();
        }
        let mut out: Vec<Option<RateValue>> = vec![None; xs.len()];
        let Some(pivot) = (0..xs.len()).min_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs())) else {
            return Vec::new();
        };
        out[pivot] = Some(self.minimize(xs[pivot], cfg, None));
        for dir in [1isize, -1] {
            let mut prev = pivot;
            let mut i = pivot as isize + dir;
            while i >= 0 && (i as usize) < xs.len() {
                let warm = out[prev].as_ref().map(|r| r.argmin.coeffs.clone());
                let r = self.minimize(xs[i as usize], cfg, warm.as_deref());
                out[i as usize] = Some(r);
                prev = i as usize;
                i += dir;
            }
        }
        out.into_iter().map(|r| r.expect("every grid point visited")).collect()
    }
}

/// Limit kernel for pricing asymptotics, or the formal H = 0 RL kernel for
/// LOGFBM at H = 0 (flagged as formal).
fn asymptotic_kernel(spec: &KernelSpec, quad_n: usize) -> Result<(Kernel, bool)> {
    if spec.family == KernelFamily::LogFbm && spec.hurst == 0.0 {
        spec.validate()?;
        return Ok((Kernel::formal_rl(spec.scale, quad_n), true));
    }
    Ok((limit_evaluator(&limit_kernel(spec)?, quad_n)?, false))
}

/// `Σ(x) = |x| / √(2 J(x))` with `J` computed for the limit kernel of `spec`.
pub fn asymptotic_smile(x: f64, model: &ModelParams, spec: &KernelSpec, cfg: &RitzConfig) -> Result<f64> {
    if x == 0.0 {
        return domain("asymptotic smile is 0/0 at x = 0; use md_coefficients");
    }
    let khat = limit_kernel(spec)?;
    let r = rate_function(x, model, &khat, cfg)?;
    Ok(smile_from_rate(&r))
}

pub fn smile_from_rate(r: &RateValue) -> f64 {
    r.x.abs() / (2.0 * r.j).sqrt()
}

/// Maturity scaling of the finite-difference skew: `t^{H-1/2}`, times
/// `(-log t)^{-p}` for LOGFBM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFactor {
    pub exponent: f64,
    pub log_power: Option<f64>,
}

impl TimeFactor {
    pub fn for_spec(spec: &KernelSpec) -> Self {
        TimeFactor {
            exponent: spec.hurst - 0.5,
            log_power: (spec.family == KernelFamily::LogFbm).then_some(spec.log_power),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let base = t.powf(self.exponent);
        match self.log_power {
            Some(p) => base * (-t.ln()).powf(-p),
            None => base,
        }
    }

    pub fn describe(&self) -> String {
        match self.log_power {
            Some(p) => format!("t^({}) * (-log t)^(-{p})", self.exponent),
            None => format!("t^({})", self.exponent),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewAsymptote {
    pub slope: f64,
    pub time_factor: TimeFactor,
    /// Set for LOGFBM at H = 0, where no LDP backs the value.
    pub formal: bool,
}

/// `(Σ(x) - Σ(-x)) / (2x)` and its maturity scaling.
pub fn skew_asymptote(x: f64, model: &ModelParams, spec: &KernelSpec, cfg: &RitzConfig) -> Result<SkewAsymptote> {
    if !(x > 0.0) {
        return domain(format!("skew_asymptote needs x > 0, got {x}"));
    }
    let (kernel, formal) = asymptotic_kernel(spec, cfg.quad_n)?;
    let problem = RitzProblem::with_kernel(model, kernel, cfg)?;
    let up = problem.minimize(x, cfg, None);
    let down = problem.minimize(-x, cfg, None);
    let slope = (smile_from_rate(&up) - smile_from_rate(&down)) / (2.0 * x);
    Ok(SkewAsymptote { slope, time_factor: TimeFactor::for_spec(spec), formal })
}

/// Central differences of `J` at 0 with step `h`:
/// `J2 ≈ (J(h) + J(-h)) / h²`,
/// `J3 ≈ (J(2h) - 2J(h) + 2J(-h) - J(-2h)) / (2h³)`.
pub fn rate_derivatives_fd(model: &ModelParams, khat: &KernelSpec, cfg: &RitzConfig, h: f64) -> Result<(f64, f64)> {
    if !(1e-3..=5e-2).contains(&h) {
        return domain(format!("finite-difference step {h} outside [1e-3, 5e-2]"));
    }
    let problem = RitzProblem::new(model, khat, cfg)?;
    let j: Vec<f64> = [2.0 * h, h, -h, -2.0 * h]
        .par_iter()
        .map(|&x| problem.minimize(x, cfg, None).j)
        .collect();
    let j2 = (j[1] + j[2]) / (h * h);
    let j3 = (j[0] - 2.0 * j[1] + 2.0 * j[2] - j[3]) / (2.0 * h * h * h);
    Ok((j2, j3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fast_cfg() -> RitzConfig {
        RitzConfig { quad_n: 64, ..Default::default() }
    }

    #[test]
    fn basis_is_orthonormal() {
        let rule = Rule::graded(256, Endpoints::Smooth);
        for i in 0..7 {
            for j in 0..7 {
                let ip = rule.integrate(0.0, 1.0, |s| basis_derivative(i, s) * basis_derivative(j, s));
                assert_abs_diff_eq!(ip, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hat_f_cases() {
        let zero = FourierPath::zero(5);
        let one = FourierPath { coeffs: vec![1.0, 0.0, 0.0] };
        assert_eq!(hat_f(&zero, 0.7, &KernelSpec::fbm(0.3), 64).unwrap(), 0.0);
        assert_abs_diff_eq!(hat_f(&one, 0.7, &KernelSpec::fbm(0.5), 64).unwrap(), 0.7, epsilon = 1e-14);
        let rl = hat_f(&one, 0.6, &KernelSpec::rl(1.0, 0.3), 64).unwrap();
        assert_abs_diff_eq!(rl, 0.6f64.powf(0.8) / 0.8, epsilon = 1e-9);
        assert!(hat_f(&one, 0.6, &KernelSpec::fou(0.3, 1.0), 64).is_err());
    }

    #[test]
    fn objective_closed_forms() {
        let m = ModelParams::new(-0.7, 0.2, 0.0).unwrap();
        let khat = KernelSpec::fbm(0.3);
        let x = 0.1;
        let zero = FourierPath::zero(5);
        let v0 = energy_objective(&zero, x, &m, &khat, 64).unwrap();
        assert_abs_diff_eq!(v0, x * x / (2.0 * m.rho_bar.powi(2) * 0.04), epsilon = 1e-12);
        let slope = FourierPath { coeffs: vec![m.rho * x / 0.2, 0.0, 0.0, 0.0, 0.0] };
        let v1 = energy_objective(&slope, x, &m, &khat, 64).unwrap();
        assert_abs_diff_eq!(v1, x * x / (2.0 * 0.04), epsilon = 1e-12);
        assert_eq!(energy_objective(&zero, 0.0, &m, &khat, 64).unwrap(), 0.0);
    }

    #[test]
    fn constant_vol_rate() {
        let m = ModelParams::new(-0.7, 0.2, 0.0).unwrap();
        let r = rate_function(0.1, &m, &KernelSpec::fbm(0.3), &fast_cfg()).unwrap();
        assert_abs_diff_eq!(r.j, 0.125, epsilon = 1e-3);
        assert!(r.converged);
        let z = rate_function(0.0, &m, &KernelSpec::fbm(0.3), &fast_cfg()).unwrap();
        assert_eq!(z.j, 0.0);
        assert!(z.argmin.coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn negative_correlation_tilts_rate() {
        let m = ModelParams::new(-0.7, 0.2, 1.5).unwrap();
        let cfg = fast_cfg();
        let up = rate_function(0.1, &m, &KernelSpec::fbm(0.3), &cfg).unwrap();
        let down = rate_function(-0.1, &m, &KernelSpec::fbm(0.3), &cfg).unwrap();
        assert!(down.j < up.j, "{} vs {}", down.j, up.j);
        let s_down = asymptotic_smile(-0.1, &m, &KernelSpec::fbm(0.3), &cfg).unwrap();
        let s_up = asymptotic_smile(0.1, &m, &KernelSpec::fbm(0.3), &cfg).unwrap();
        assert!(s_down > s_up);
    }

    #[test]
    fn smile_near_the_money_follows_expansion() {
        let m = ModelParams::new(-0.7, 0.2, 1.5).unwrap();
        let c = md_coefficients(&m, 0.3, 64).unwrap();
        for x in [-0.01, 0.01] {
            let s = asymptotic_smile(x, &m, &KernelSpec::fbm(0.3), &fast_cfg()).unwrap();
            let quadratic = c.sigma0 + c.sigma1 * x + c.sigma2_half * x * x;
            assert!((s - quadratic).abs() < 1e-4, "{s} vs {quadratic}");
        }
        assert!(asymptotic_smile(0.0, &m, &KernelSpec::fbm(0.3), &fast_cfg()).is_err());
    }

    #[test]
    fn flat_and_brownian_skews() {
        let cfg = fast_cfg();
        let flat = ModelParams::new(-0.7, 0.2, 0.0).unwrap();
        let s = skew_asymptote(0.05, &flat, &KernelSpec::fbm(0.3), &cfg).unwrap();
        assert!(s.slope.abs() < 1e-4);
        let m = ModelParams::new(-0.7, 0.2, 0.2).unwrap();
        let s = skew_asymptote(0.01, &m, &KernelSpec::fbm(0.5), &cfg).unwrap();
        assert_abs_diff_eq!(s.slope, -0.7 * 0.2 / 4.0, epsilon = 2e-3);
        let uncorrelated = ModelParams::new(0.0, 0.2, 1.5).unwrap();
        let s = skew_asymptote(0.01, &uncorrelated, &KernelSpec::fbm(0.3), &cfg).unwrap();
        assert!(s.slope.abs() < 1e-3);
        assert!(skew_asymptote(-0.01, &m, &KernelSpec::fbm(0.3), &cfg).is_err());
    }

    #[test]
    fn zero_hurst_log_fbm_skew_is_formal() {
        let m = ModelParams::new(-0.7, 0.2, 0.2).unwrap();
        let spec = KernelSpec::log_fbm(1.0, 0.0, 1.5);
        let s = skew_asymptote(0.01, &m, &spec, &fast_cfg()).unwrap();
        assert!(s.formal);
        assert!(s.slope < 0.0);
        assert_eq!(s.time_factor.log_power, Some(1.5));
        assert!(asymptotic_smile(0.1, &m, &spec, &fast_cfg()).is_err());
    }

    #[test]
    fn log_fbm_rate_equals_rl_rate() {
        let m = ModelParams::new(-0.7, 0.2, 1.5).unwrap();
        let cfg = fast_cfg();
        let a = asymptotic_smile(0.1, &m, &KernelSpec::log_fbm(1.0, 0.2, 1.5), &cfg).unwrap();
        let b = asymptotic_smile(0.1, &m, &KernelSpec::rl(1.0, 0.2), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuation_visits_every_point() {
        let m = ModelParams::new(-0.7, 0.2, 1.5).unwrap();
        let xs = [-0.2, -0.1, 0.0, 0.1, 0.2];
        let cfg = fast_cfg();
        let curve = rate_curve(&xs, &m, &KernelSpec::fbm(0.3), &cfg).unwrap();
        assert_eq!(curve.iter().map(|r| r.x).collect::<Vec<_>>(), xs.to_vec());
        assert_eq!(curve[2].j, 0.0);
        assert!(curve[0].j > curve[1].j && curve[4].j > curve[3].j);
        let csv = rate_table_csv(&curve);
        assert!(csv.starts_with("x,J,converged\n"));
    }

    #[test]
    fn fd_step_range() {
        let m = ModelParams::new(-0.7, 0.2, 0.0).unwrap();
        assert!(rate_derivatives_fd(&m, &KernelSpec::fbm(0.3), &fast_cfg(), 0.5).is_err());
    }
}
