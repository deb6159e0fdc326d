//! Forward Euler simulation of the log-price and Monte Carlo prices of
//! European options with `S_0 = 1` and zero rates.

use std::fmt;
use std::sync::Arc;

use ndarray::ArrayView1;

use crate::bs::OptionKind;
use crate::error::{domain, Error, Result};
use crate::gauss_sim::{build_sampler, PathGrid};
use crate::kernels::{KernelSpec, DEFAULT_QUAD_N};
use crate::quadrature::pairwise_sum;

/// Volatility as a function of the driving Volterra process.
#[derive(Clone)]
pub enum VolFn {
    /// `σ0 exp(η x / 2)`.
    Exponential,
    /// User-supplied positive function.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for VolFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolFn::Exponential => f.write_str("Exponential"),
            VolFn::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub rho: f64,
    /// `√(1 - ρ²)`.
    pub rho_bar: f64,
    pub sigma0: f64,
    pub eta: f64,
    pub vol_fn: VolFn,
}

impl ModelParams {
    pub fn new(rho: f64, sigma0: f64, eta: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return domain(format!("rho={rho} outside (-1,1)"));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return domain(format!("sigma0={sigma0} must be > 0"));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return domain(format!("eta={eta} must be >= 0"));
        }
        Ok(ModelParams {
            rho,
            rho_bar: (1.0 - rho * rho).sqrt(),
            sigma0,
            eta,
            vol_fn: VolFn::Exponential,
        })
    }

    /// Replaces the exponential volatility map. `sigma0` is reset to `f(0)`.
    pub fn with_vol_fn(mut self, f: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Result<Self> {
        let s0 = f(0.0);
        if !(s0 > 0.0 && s0.is_finite()) {
            return domain(format!("custom vol function must be positive at 0, got {s0}"));
        }
        self.sigma0 = s0;
        self.vol_fn = VolFn::Custom(f);
        Ok(self)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        match &self.vol_fn {
            VolFn::Exponential => self.sigma0 * (0.5 * self.eta * x).exp(),
            VolFn::Custom(f) => f(x),
        }
    }

    /// `(σ(0), σ'(0), σ''(0))`; central differences for custom maps.
    pub fn sigma_derivatives_at_zero(&self) -> (f64, f64, f64) {
        match &self.vol_fn {
            VolFn::Exponential => {
                let s = self.sigma0;
                (s, 0.5 * s * self.eta, 0.25 * s * self.eta * self.eta)
            }
            VolFn::Custom(f) => {
                let h = 1e-4;
                let (m, z, p) = (f(-h), f(0.0), f(h));
                (z, (p - m) / (2.0 * h), (p - 2.0 * z + m) / (h * h))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Quadrature resolution for the covariance assembly.
    pub quad_n: usize,
}

impl Default for MCConfig {
    fn default() -> Self {
        MCConfig {
            paths: 100_000,
            steps: 200,
            seed: 20_240_501,
            antithetic: false,
            quad_n: DEFAULT_QUAD_N,
        }
    }
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 100 {
            return domain(format!("paths={} below 100", self.paths));
        }
        if self.steps < 10 {
            return domain(format!("steps={} below 10", self.steps));
        }
        if self.antithetic && self.paths % 2 == 1 {
            return domain("antithetic sampling needs an even path count");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub price: f64,
    pub stderr: f64,
    pub maturity: f64,
    pub log_moneyness: f64,
    pub kind: OptionKind,
}

impl PriceEstimate {
    /// `t,x,k,kind,price,stderr` row.
    pub fn csv_row(&self, x: f64) -> String {
        format!(
            "{},{},{},{},{:.12e},{:.6e}",
            self.maturity, x, self.log_moneyness, self.kind, self.price, self.stderr
        )
    }
}

pub const PRICE_CSV_HEADER: &str = "t,x,k,kind,price,stderr";

/// `X_t^N = -dt/2 Σ σ²(V_{t_k}) + Σ σ(V_{t_k}) (ρ dB_k + ρ̄ dB̄_k)`, `k = 0..N-1`.
///
/// `v[k]` holds `V_{t_{k+1}}`; the scheme is left-point with `V_{t_0} = 0`,
/// so `v[N-1]` is not used.
pub fn euler_log_price(model: &ModelParams, v: &[f64], db: &[f64], dbbar: &[f64], dt: f64) -> Result<f64> {
    let n = v.len();
    for len in [db.len(), dbbar.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, got: len });
        }
    }
    if !(dt > 0.0) {
        return domain(format!("dt={dt} must be > 0"));
    }
    Ok(euler_unchecked(model, v.iter().copied(), db.iter().copied(), dbbar.iter().copied(), dt))
}

fn euler_unchecked(
    model: &ModelParams,
    v: impl Iterator<Item = f64>,
    db: impl Iterator<Item = f64>,
    dbbar: impl Iterator<Item = f64>,
    dt: f64,
) -> f64 {
    let mut drift = 0.0;
    let mut diffusion = 0.0;
    let left = std::iter::once(0.0).chain(v);
    for ((vk, b), bb) in left.zip(db).zip(dbbar) {
        let s = model.sigma(vk);
        drift += s * s;
        diffusion += s * (model.rho * b + model.rho_bar * bb);
    }
    -0.5 * dt * drift + diffusion
}

/// Mean and standard error; antithetic pairs are averaged first.
pub fn mean_stderr(values: &[f64], antithetic: bool) -> (f64, f64) {
    let pairs: Vec<f64>;
    let xs = if antithetic {
        pairs = values.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        &pairs[..]
    } else {
        values
    };
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Terminal log-prices `X_t` of one simulation run.
#[derive(Debug, Clone)]
pub struct LogPriceSample {
    pub maturity: f64,
    pub x: Vec<f64>,
    pub antithetic: bool,
}

pub fn payoff(x: f64, k: f64, kind: OptionKind) -> f64 {
    match kind {
        OptionKind::Call => (x.exp() - k.exp()).max(0.0),
        OptionKind::Put => (k.exp() - x.exp()).max(0.0),
    }
}

impl LogPriceSample {
    pub fn payoffs(&self, k: f64, kind: OptionKind) -> Vec<f64> {
        self.x.iter().map(|&x| payoff(x, k, kind)).collect()
    }

    pub fn price(&self, k: f64, kind: OptionKind) -> PriceEstimate {
        let (price, stderr) = mean_stderr(&self.payoffs(k, kind), self.antithetic);
        PriceEstimate { price, stderr, maturity: self.maturity, log_moneyness: k, kind }
    }

    /// Sample mean of `S_t = e^{X_t}` and its standard error.
    pub fn forward(&self) -> (f64, f64) {
        let s: Vec<f64> = self.x.iter().map(|x| x.exp()).collect();
        mean_stderr(&s, self.antithetic)
    }
}

/// Simulates `mc.paths` terminal log-prices at maturity `t`.
pub fn simulate_log_prices(spec: &KernelSpec, model: &ModelParams, mc: &MCConfig, t: f64) -> Result<LogPriceSample> {
    mc.validate()?;
    let grid = PathGrid::new(t, mc.steps)?;
    let sampler = build_sampler(spec, grid, mc.quad_n)?;
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let x = sampler.map_paths(mc.seed, mc.paths, mc.antithetic, mc.steps, |_, v: ArrayView1<f64>, b: ArrayView1<f64>, extra: &[f64]| {
        let db = (0..b.len()).map(|k| if k == 0 { b[0] } else { b[k] - b[k - 1] });
        euler_unchecked(model, v.iter().copied(), db, extra.iter().map(|z| sdt * z), dt)
    });
    Ok(LogPriceSample { maturity: t, x, antithetic: mc.antithetic })
}

pub fn mc_option_price(
    spec: &KernelSpec,
    model: &ModelParams,
    mc: &MCConfig,
    t: f64,
    k: f64,
    kind: OptionKind,
) -> Result<PriceEstimate> {
    Ok(simulate_log_prices(spec, model, mc, t)?.price(k, kind))
}

/// `|(call - put) - mean(S_t - e^k)|` on common paths; zero up to round-off
/// because `(a-b)^+ - (b-a)^+ = a - b` path by path.
pub fn put_call_parity_check(spec: &KernelSpec, model: &ModelParams, mc: &MCConfig, t: f64, k: f64) -> Result<f64> {
    let sample = simulate_log_prices(spec, model, mc, t)?;
    Ok(parity_residual(&sample, k))
}

pub fn parity_residual(sample: &LogPriceSample, k: f64) -> f64 {
    let call = sample.price(k, OptionKind::Call).price;
    let put = sample.price(k, OptionKind::Put).price;
    let diff: Vec<f64> = sample.x.iter().map(|x| x.exp() - k.exp()).collect();
    ((call - put) - pairwise_sum(&diff) / diff.len() as f64).abs()
}

/// Gap `|(call - put) - (1 - e^k)|` between separately estimated legs and
/// its combined standard error. With common paths this measures how far
/// the simulated forward is from 1; with independent seeds it is of order
/// the standard error.
pub fn parity_gap(call: &PriceEstimate, put: &PriceEstimate) -> (f64, f64) {
    let k = call.log_moneyness;
    let gap = ((call.price - put.price) - (1.0 - k.exp())).abs();
    (gap, call.stderr.hypot(put.stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn drift_only_path() {
        let m = ModelParams::new(0.3, 0.2, 0.0).unwrap();
        let n = 8;
        let x = euler_log_price(&m, &vec![0.7; n], &vec![0.0; n], &vec![0.0; n], 1.0 / n as f64).unwrap();
        assert_abs_diff_eq!(x, -0.02, epsilon = 1e-15);
    }

    #[test]
    fn two_step_hand_value() {
        let m = ModelParams::new(0.999_999_999_999, 0.2, 0.0).unwrap();
        let x = euler_log_price(&m, &[0.0, 0.0], &[0.1, -0.1], &[0.0, 0.0], 0.5).unwrap();
        assert_abs_diff_eq!(x, -0.02, epsilon = 1e-12);
    }

    #[test]
    fn left_point_uses_sigma0_first() {
        let m = ModelParams::new(0.0, 0.2, 1.0).unwrap();
        // only the first increment is non-zero, so V is irrelevant
        let x = euler_log_price(&m, &[5.0, 5.0], &[0.0, 0.0], &[0.3, 0.0], 0.5).unwrap();
        let s1 = m.sigma(5.0);
        assert_abs_diff_eq!(x, -0.25 * (0.04 + s1 * s1) + 0.2 * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn length_mismatch() {
        let m = ModelParams::new(0.0, 0.2, 1.0).unwrap();
        assert!(matches!(
            euler_log_price(&m, &[0.0; 3], &[0.0; 2], &[0.0; 3], 0.1),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn model_validation_and_derivatives() {
        assert!(ModelParams::new(1.0, 0.2, 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(0.0, 0.2, -1.0).is_err());
        let m = ModelParams::new(-0.7, 0.2, 1.5).unwrap();
        assert_abs_diff_eq!(m.rho * m.rho + m.rho_bar * m.rho_bar, 1.0, epsilon = 1e-15);
        assert_eq!(m.sigma(0.0), 0.2);
        let (s, d1, d2) = m.sigma_derivatives_at_zero();
        let c = m.clone().with_vol_fn(Arc::new(|x: f64| 0.2 * (0.75 * x).exp())).unwrap();
        let (cs, cd1, cd2) = c.sigma_derivatives_at_zero();
        assert_abs_diff_eq!(s, cs, epsilon = 1e-15);
        assert_abs_diff_eq!(d1, cd1, epsilon = 1e-8);
        assert_abs_diff_eq!(d2, cd2, epsilon = 1e-6);
    }

    #[test]
    fn antithetic_stderr_uses_pairs() {
        let (m, se) = mean_stderr(&[1.0, -1.0, 2.0, -2.0], true);
        assert_eq!(m, 0.0);
        assert_eq!(se, 0.0);
        let (m, se) = mean_stderr(&[1.0, 3.0], false);
        assert_eq!(m, 2.0);
        assert_abs_diff_eq!(se, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn mc_config_checks() {
        assert!(MCConfig::default().validate().is_ok());
        assert!(MCConfig { paths: 50, ..Default::default() }.validate().is_err());
        assert!(MCConfig { steps: 5, ..Default::default() }.validate().is_err());
        assert!(MCConfig { paths: 101, antithetic: true, ..Default::default() }.validate().is_err());
    }
}
