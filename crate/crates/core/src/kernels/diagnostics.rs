//! Numerical checks of the short-time kernel conditions: convergence of the
//! rescaled kernel to its limit, a uniform Hölder-type bound on the rescaled
//! increments, and the modulus exponent of the unscaled kernel.

use std::fmt::Write as _;

use super::{limit_kernel, speed_gamma, Kernel, KernelFamily, KernelSpec, ScaledKernel, ScaledKernelSpec, HORIZON};
use crate::error::{domain, Result};
use crate::quadrature::{Endpoints, Rule};

/// K2 is reported as bounded when max/min of the per-ε ratios stays below this.
pub const K2_GROWTH_LIMIT: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub family: KernelFamily,
    pub tag: String,
    pub epsilons: Vec<f64>,
    /// Empty when the limit kernel does not exist.
    pub k1_sup_errors: Vec<f64>,
    pub k2_ratios: Vec<f64>,
    pub beta: f64,
    pub m_bound: f64,
    pub a1_theta: Option<f64>,
    /// Set for LOGFBM at H = 0, where no small-time LDP holds.
    pub no_ldp: bool,
}

impl DiagnosticsReport {
    fn empty(spec: &KernelSpec, epsilons: &[f64]) -> Self {
        DiagnosticsReport {
            family: spec.family,
            tag: spec.tag(),
            epsilons: epsilons.to_vec(),
            k1_sup_errors: Vec::new(),
            k2_ratios: Vec::new(),
            beta: spec.hurst,
            m_bound: f64::NAN,
            a1_theta: None,
            no_ldp: spec.family == KernelFamily::LogFbm && spec.hurst == 0.0,
        }
    }

    /// max/min of the K2 ratios across ε.
    pub fn k2_spread(&self) -> f64 {
        let max = self.k2_ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = self.k2_ratios.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn k2_bounded(&self) -> bool {
        !self.k2_ratios.is_empty() && self.k2_spread() <= K2_GROWTH_LIMIT
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,k1_sup_error,k2_max_ratio\n");
        for (i, eps) in self.epsilons.iter().enumerate() {
            let k1 = self.k1_sup_errors.get(i).map_or("NA".to_string(), |v| format!("{v:.10e}"));
            let k2 = self.k2_ratios.get(i).map_or("NA".to_string(), |v| format!("{v:.10e}"));
            let _ = writeln!(out, "{eps},{k1},{k2}");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.no_ldp {
            let _ = writeln!(out, "*** no-LDP: {} at H=0 has no small-time LDP; limit kernel undefined ***", self.tag);
        }
        let _ = writeln!(out, "kernel {}  beta={}", self.tag, self.beta);
        let _ = writeln!(out, "{:>12}  {:>16}  {:>16}", "eps", "k1_sup_error", "k2_max_ratio");
        for (i, eps) in self.epsilons.iter().enumerate() {
            let k1 = self.k1_sup_errors.get(i).map_or("NA".to_string(), |v| format!("{v:.6e}"));
            let k2 = self.k2_ratios.get(i).map_or("NA".to_string(), |v| format!("{v:.6e}"));
            let _ = writeln!(out, "{eps:>12}  {k1:>16}  {k2:>16}");
        }
        if !self.k2_ratios.is_empty() {
            let verdict = if self.k2_bounded() { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "M_bound={:.6e}  k2 max/min={:.4}  {verdict}", self.m_bound, self.k2_spread());
        }
        if let Some(theta) = self.a1_theta {
            let _ = writeln!(out, "a1_theta={theta:.6}");
        }
        out
    }
}

fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return domain("empty epsilon list");
    }
    if eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return domain("epsilons must lie in (0,1)");
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return domain("epsilons must be strictly decreasing");
    }
    Ok(())
}

fn check_grid(grid_n: usize) -> Result<()> {
    if grid_n < 8 {
        return domain(format!("grid_n={grid_n} below 8"));
    }
    Ok(())
}

/// Sup over the off-diagonal grid `s = j/g`, `t = i/g`, `1 <= j < i` of
/// `|K^n(t,s)/γ(ε) - K̂(t,s)|` for each ε.
pub fn check_k1(spec: &KernelSpec, eps_list: &[f64], grid_n: usize) -> Result<DiagnosticsReport> {
    check_eps_list(eps_list)?;
    check_grid(grid_n)?;
    let khat = Kernel::new(limit_kernel(spec)?)?;
    let g = grid_n as f64;
    let mut report = DiagnosticsReport::empty(spec, eps_list);
    for &eps in eps_list {
        let sk = ScaledKernel::new(ScaledKernelSpec { base: *spec, epsilon: eps }, super::DEFAULT_QUAD_N)?;
        let gamma = speed_gamma(spec, eps)?;
        let mut sup: f64 = 0.0;
        for i in 2..=grid_n {
            for j in 1..i {
                let (t, s) = (i as f64 / g, j as f64 / g);
                let err = (sk.eval(t, s)? / gamma - khat.eval(t, s)?).abs();
                sup = sup.max(err);
            }
        }
        report.k1_sup_errors.push(sup);
    }
    Ok(report)
}

/// Values `√w K(t_i, u)` at every quadrature node `u` of every grid cell,
/// laid out node-major, together with the cell index of each node.
struct CellColumns {
    rows: Vec<Vec<f64>>,
    cell: Vec<usize>,
}

fn cell_columns(sk: &ScaledKernel, ts: &[f64], per_cell: usize) -> CellColumns {
    let rule = Rule::graded(per_cell, Endpoints::Both);
    let eps = sk.epsilon();
    let scaled_ts: Vec<f64> = ts.iter().map(|t| eps * t).collect();
    let mut rows = Vec::new();
    let mut cell = Vec::new();
    let mut lo = 0.0;
    for (c, &hi) in ts.iter().enumerate() {
        for (u, w) in rule.mapped(lo, hi) {
            let col = sk.kernel.column(eps * u, &scaled_ts);
            let sw = w.sqrt() * eps.sqrt();
            rows.push(col.into_iter().map(|k| sw * k).collect());
            cell.push(c);
        }
        lo = hi;
    }
    CellColumns { rows, cell }
}

/// Per-ε max over grid pairs (including `s = 0`) of
/// `∫ (K^n(t,u) - K^n(s,u))² du / (γ(ε)² |t-s|^{2β})` with `β = H`.
pub fn check_k2(
    spec: &KernelSpec,
    eps_list: &[f64],
    grid_n: usize,
    quad_n: usize,
) -> Result<DiagnosticsReport> {
    check_eps_list(eps_list)?;
    check_grid(grid_n)?;
    spec.validate()?;
    let beta = spec.hurst;
    let ts: Vec<f64> = (1..=grid_n).map(|i| i as f64 / grid_n as f64).collect();
    let per_cell = quad_n.div_ceil(grid_n).max(16);
    let mut report = DiagnosticsReport::empty(spec, eps_list);
    for &eps in eps_list {
        let sk = ScaledKernel::new(ScaledKernelSpec { base: *spec, epsilon: eps }, quad_n)?;
        let gamma = speed_gamma(spec, eps)?;
        let cols = cell_columns(&sk, &ts, per_cell);
        let mut worst: f64 = 0.0;
        // pair (t_a, t_b) with t_b < t_a; b = None stands for s = 0
        for a in 0..grid_n {
            for b in std::iter::once(None).chain((0..a).map(Some)) {
                let mut acc = 0.0;
                for (row, &c) in cols.rows.iter().zip(&cols.cell) {
                    if c > a {
                        break;
                    }
                    let kb = match b {
                        Some(b) if c <= b => row[b],
                        _ => 0.0,
                    };
                    let d = row[a] - kb;
                    acc += d * d;
                }
                let sb = b.map_or(0.0, |b| ts[b]);
                let ratio = acc / (gamma * gamma * (ts[a] - sb).powf(2.0 * beta));
                worst = worst.max(ratio);
            }
        }
        report.k2_ratios.push(worst);
    }
    report.m_bound = report.k2_ratios.iter().copied().fold(0.0, f64::max);
    Ok(report)
}

const A1_GRID: usize = 16;

/// Least-squares slope of `log M(δ)` against `log δ`, with `M(δ)` the max
/// over `t` on a uniform grid of `∫ (K(t+δ,u) - K(t,u))² du`.
///
/// LOGFBM is sampled on `[0, 1/2]` only: without a variance cutoff its
/// kernel blows up as `t - s → 1`.
pub fn estimate_a1(spec: &KernelSpec, delta_list: &[f64], quad_n: usize) -> Result<f64> {
    if delta_list.len() < 3 {
        return domain("estimate_a1 needs at least 3 deltas");
    }
    let window = if spec.family == KernelFamily::LogFbm { 0.5 } else { HORIZON };
    if delta_list.iter().any(|&d| !(d > 0.0 && d < window)) {
        return domain(format!("deltas must lie in (0, {window})"));
    }
    let kernel = Kernel::with_quad(*spec, quad_n)?;
    let rule = Rule::graded(quad_n, Endpoints::Both);
    let mut pts = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        let mut m: f64 = 0.0;
        for j in 0..=A1_GRID {
            let t = (window - delta) * j as f64 / A1_GRID as f64;
            let t2 = t + delta;
            let near = rule.integrate(t, t2, |u| kernel.value(t2, u).powi(2));
            let far = if t > 0.0 {
                rule.integrate(0.0, t, |u| (kernel.value(t2, u) - kernel.value(t, u)).powi(2))
            } else {
                0.0
            };
            m = m.max(near + far);
        }
        pts.push((delta.ln(), m.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// K1 (when a limit kernel exists), K2 and A1 in one report.
pub fn run_diagnostics(
    spec: &KernelSpec,
    eps_list: &[f64],
    grid_n: usize,
    quad_n: usize,
    deltas: &[f64],
) -> Result<DiagnosticsReport> {
    let mut report = check_k2(spec, eps_list, grid_n, quad_n)?;
    if !report.no_ldp {
        report.k1_sup_errors = check_k1(spec, eps_list, grid_n)?.k1_sup_errors;
    }
    report.a1_theta = Some(estimate_a1(spec, deltas, quad_n)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: [f64; 3] = [0.1, 0.01, 0.001];

    #[test]
    fn fbm_k1_is_exact() {
        let r = check_k1(&KernelSpec::fbm(0.3), &EPS, 8).unwrap();
        assert!(r.k1_sup_errors.iter().all(|&e| e < 1e-12), "{:?}", r.k1_sup_errors);
    }

    #[test]
    fn fbm_k2_independent_of_eps() {
        let r = check_k2(&KernelSpec::fbm(0.3), &EPS, 8, 64).unwrap();
        assert!(r.k2_spread() < 1.0 + 1e-9, "{:?}", r.k2_ratios);
        // increments of fBM have variance |t-s|^{2H} exactly
        assert!((r.m_bound - 1.0).abs() < 1e-4, "{}", r.m_bound);
    }

    #[test]
    fn log_fbm_k1_decreases() {
        let r = check_k1(&KernelSpec::log_fbm(1.0, 0.2, 1.0), &EPS, 8).unwrap();
        let e = &r.k1_sup_errors;
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    }

    #[test]
    fn zero_hurst_log_fbm_has_no_k1() {
        let spec = KernelSpec::log_fbm(1.0, 0.0, 1.5);
        assert!(check_k1(&spec, &EPS, 8).is_err());
        let r = run_diagnostics(&spec, &[0.1, 0.01], 8, 32, &[0.05, 0.1, 0.2]).unwrap();
        assert!(r.no_ldp);
        assert!(r.k1_sup_errors.is_empty());
        assert_eq!(r.k2_ratios.len(), 2);
        assert!(r.to_text().contains("no-LDP"));
    }

    #[test]
    fn fbm_a1_slope_is_twice_hurst() {
        let theta = estimate_a1(&KernelSpec::fbm(0.3), &[0.02, 0.05, 0.1, 0.2], 64).unwrap();
        assert!((theta - 0.6).abs() < 1e-3, "{theta}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = KernelSpec::fbm(0.3);
        assert!(check_k1(&spec, &[0.01, 0.1], 8).is_err());
        assert!(check_k1(&spec, &[0.1], 4).is_err());
        assert!(estimate_a1(&spec, &[0.1, 0.2], 32).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = check_k1(&KernelSpec::fbm(0.3), &[0.1, 0.01], 8).unwrap();
        let csv = r.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "eps,k1_sup_error,k2_max_ratio");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].ends_with(",NA"));
    }
}
