//! Moderate-deviation expansion of the smile around the money.

use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::kernels::{Kernel, KernelFamily, KernelSpec};
use crate::pricing::ModelParams;
use crate::quadrature::{Endpoints, Rule};

/// Inner products of a limit kernel on `[0,1]`, with `K1(t) = ∫_0^t K(t,u) du`
/// and `K̄1(u) = ∫_u^1 K(t,u) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProducts {
    /// `⟨K1, 1⟩`
    pub k1_mean: f64,
    /// `⟨K1², 1⟩`
    pub a: f64,
    /// `⟨K̄1², 1⟩`
    pub b: f64,
    /// `⟨K1, K̄1⟩`
    pub c: f64,
}

/// Inner products for the fBM kernel with Hurst index `hurst`.
pub fn kernel_inner_products(hurst: f64, quad_n: usize) -> Result<InnerProducts> {
    inner_products_of(&KernelSpec::fbm(hurst), quad_n)
}

fn inner_products_of(khat: &KernelSpec, quad_n: usize) -> Result<InnerProducts> {
    if !matches!(khat.family, KernelFamily::Fbm | KernelFamily::Rl) {
        return domain(format!("inner products need an FBM or RL kernel, got {}", khat.family));
    }
    if quad_n < 16 {
        return domain(format!("quad_n={quad_n} below 16"));
    }
    let k = Kernel::with_quad(*khat, quad_n)?;
    let outer = Rule::graded(quad_n, Endpoints::Both);
    let inner = Rule::graded(quad_n, Endpoints::Both);
    let rows: Vec<[f64; 4]> = outer
        .nodes()
        .par_iter()
        .zip(outer.weights())
        .map(|(&s, &w)| {
            let k1 = inner.integrate(0.0, s, |u| k.value(s, u));
            let kbar = inner.integrate(s, 1.0, |t| k.value(t, s));
            [w * k1, w * k1 * k1, w * kbar * kbar, w * k1 * kbar]
        })
        .collect();
    let sum = |i: usize| rows.iter().map(|r| r[i]).sum::<f64>();
    Ok(InnerProducts { k1_mean: sum(0), a: sum(1), b: sum(2), c: sum(3) })
}

/// Derivatives of `J` at 0 and the second-order expansion
/// `Σ(x) ≈ Σ0 + Σ1 x + (Σ2/2) x²` of the asymptotic smile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MDCoefficients {
    pub inner: InnerProducts,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    /// `Σ''(0) / 2`
    pub sigma2_half: f64,
}

impl MDCoefficients {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let p = &self.inner;
        for (key, v) in [
            ("k1_mean", p.k1_mean),
            ("A", p.a),
            ("B", p.b),
            ("C", p.c),
            ("J2", self.j2),
            ("J3", self.j3),
            ("J4", self.j4),
            ("Sigma0", self.sigma0),
            ("Sigma1", self.sigma1),
            ("Sigma2_half", self.sigma2_half),
        ] {
            let _ = writeln!(out, "{key}={v:.12e}");
        }
        out
    }
}

/// Coefficients for the fBM limit kernel with Hurst index `hurst`.
pub fn md_coefficients(model: &ModelParams, hurst: f64, quad_n: usize) -> Result<MDCoefficients> {
    md_coefficients_for(model, &KernelSpec::fbm(hurst), quad_n)
}

/// Coefficients for an arbitrary FBM or RL limit kernel.
pub fn md_coefficients_for(model: &ModelParams, khat: &KernelSpec, quad_n: usize) -> Result<MDCoefficients> {
    let p = inner_products_of(khat, quad_n)?;
    let (s, s1, s2) = model.sigma_derivatives_at_zero();
    let rho = model.rho;
    let r2 = rho * rho;
    let m = p.k1_mean;

    let j2 = 1.0 / (s * s);
    let j3 = -6.0 * rho * s1 * m / s.powi(4);
    let j4 = 12.0 * s1 * s1 / s.powi(6) * (9.0 * r2 * m * m - r2 * p.a - p.b - 2.0 * r2 * p.c)
        - 12.0 * s2 / s.powi(5) * r2 * p.a;

    let sigma1 = rho * s1 * m / s;
    let sigma2_half = s1 * s1 / s.powi(3) * (-3.0 * r2 * m * m + 0.5 * r2 * p.a + 0.5 * p.b + r2 * p.c)
        + s2 / (s * s) * 0.5 * r2 * p.a;

    Ok(MDCoefficients { inner: p, j2, j3, j4, sigma0: s, sigma1, sigma2_half })
}

/// `β` outside `(2H/5, 2H/4]`, where the second-order expansion is not the
/// full moderate-deviation smile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeWarning {
    pub beta: f64,
    pub lower: f64,
    pub upper: f64,
}

impl fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "beta={} outside the moderate-deviation window ({}, {}]",
            self.beta, self.lower, self.upper
        )
    }
}

pub fn md_regime(beta: f64, hurst: f64) -> Option<RegimeWarning> {
    let lower = 0.4 * hurst;
    let upper = 0.5 * hurst;
    (!(beta > lower && beta <= upper)).then_some(RegimeWarning { beta, lower, upper })
}

/// `Σ0 + Σ1 x t^β + (Σ2/2) x² t^{2β}` at log-moneyness `x t^{1/2-β}`.
pub fn md_smile(x: f64, t: f64, beta: f64, coeffs: &MDCoefficients, hurst: f64) -> Result<f64> {
    if !(t > 0.0) || !x.is_finite() {
        return domain(format!("md_smile needs t > 0 and finite x, got t={t}, x={x}"));
    }
    if !(beta > 0.0 && beta < 0.5) || !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("md_smile needs beta in (0,1/2) and H in (0,1), got {beta}, {hurst}"));
    }
    let tb = t.powf(beta);
    Ok(coeffs.sigma0 + coeffs.sigma1 * x * tb + coeffs.sigma2_half * x * x * tb * tb)
}
