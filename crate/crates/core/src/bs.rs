//! Black–Scholes prices with `S_0 = 1`, zero rates, and implied volatility
//! by Brent's method.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 10.0;

/// Bracket after the single expansion step.
const SIGMA_MIN_EXPANDED: f64 = SIGMA_MIN * 1e-4;
const SIGMA_MAX_EXPANDED: f64 = SIGMA_MAX * 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptionKind::Call => "CALL",
            OptionKind::Put => "PUT",
        }
    }

    /// Out-of-the-money side for log-moneyness `k`.
    pub fn otm(k: f64) -> Self {
        if k < 0.0 {
            OptionKind::Put
        } else {
            OptionKind::Call
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CALL" | "C" => Ok(OptionKind::Call),
            "PUT" | "P" => Ok(OptionKind::Put),
            other => Err(Error::Config(format!("unknown option kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BSQuote {
    pub t: f64,
    pub k: f64,
    pub sigma: f64,
    pub kind: OptionKind,
}

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `(1 - e^k)^+` for calls, `(e^k - 1)^+` for puts.
pub fn intrinsic(k: f64, kind: OptionKind) -> f64 {
    match kind {
        OptionKind::Call => (1.0 - k.exp()).max(0.0),
        OptionKind::Put => (k.exp() - 1.0).max(0.0),
    }
}

/// Upper no-arbitrage bound: 1 for calls, `e^k` for puts.
pub fn upper_bound(k: f64, kind: OptionKind) -> f64 {
    match kind {
        OptionKind::Call => 1.0,
        OptionKind::Put => k.exp(),
    }
}

fn d1_d2(t: f64, k: f64, sigma: f64) -> (f64, f64) {
    let sd = sigma * t.sqrt();
    let d1 = (-k + 0.5 * sd * sd) / sd;
    (d1, d1 - sd)
}

/// Price of the out-of-the-money leg, computed without cancellation
/// against the intrinsic value.
fn otm_price(t: f64, k: f64, sigma: f64) -> f64 {
    if sigma * t.sqrt() == 0.0 {
        return 0.0;
    }
    let (d1, d2) = d1_d2(t, k, sigma);
    if k >= 0.0 {
        norm_cdf(d1) - k.exp() * norm_cdf(d2)
    } else {
        k.exp() * norm_cdf(-d2) - norm_cdf(-d1)
    }
}

pub fn bs_price(q: &BSQuote) -> f64 {
    let otm = otm_price(q.t, q.k, q.sigma);
    if OptionKind::otm(q.k) == q.kind {
        otm
    } else {
        otm + intrinsic(q.k, q.kind)
    }
}

/// `∂price/∂σ`, identical for calls and puts.
pub fn bs_vega(t: f64, k: f64, sigma: f64) -> f64 {
    let (d1, _) = d1_d2(t, k, sigma);
    t.sqrt() * norm_pdf(d1)
}

/// Brent's method for a sign change of `f` on `[a, b]`.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo: a, hi: b });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Ok(b)
}

/// Black–Scholes volatility reproducing `price`.
///
/// In-the-money quotes are mapped to the out-of-the-money leg by parity
/// first. Quotes whose time value is lost in round-off of the intrinsic
/// value are treated as sitting on the lower bound.
pub fn implied_vol(price: f64, t: f64, k: f64, kind: OptionKind) -> Result<f64> {
    if !(t > 0.0) || !k.is_finite() {
        return domain(format!("implied_vol needs t > 0 and finite k, got t={t}, k={k}"));
    }
    let lower = intrinsic(k, kind);
    let upper = upper_bound(k, kind);
    let violation = Error::NoArbitrageViolation { price, lower, upper };
    if !(price > lower && price < upper) {
        return Err(violation);
    }
    let target = if OptionKind::otm(k) == kind { price } else { price - lower };
    if target <= 100.0 * f64::EPSILON * price {
        return Err(violation);
    }
    let f = |s: f64| otm_price(t, k, s) - target;
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    if f(lo) > 0.0 {
        lo = SIGMA_MIN_EXPANDED;
    }
    if f(hi) < 0.0 {
        hi = SIGMA_MAX_EXPANDED;
    }
    brent(f, lo, hi, 1e-15, 200)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn atm_call_value() {
        let q = BSQuote { t: 0.25, k: 0.0, sigma: 0.2, kind: OptionKind::Call };
        let want = 2.0 * norm_cdf(0.05) - 1.0;
        assert_abs_diff_eq!(bs_price(&q), want, epsilon = 1e-15);
        assert_abs_diff_eq!(bs_price(&q), 0.039878, epsilon = 1e-6);
        let put = BSQuote { kind: OptionKind::Put, ..q };
        assert_abs_diff_eq!(bs_price(&put), bs_price(&q), epsilon = 1e-16);
    }

    #[test]
    fn small_vol_limit_is_intrinsic() {
        let q = BSQuote { t: 0.5, k: -0.1, sigma: 1e-9, kind: OptionKind::Call };
        assert_abs_diff_eq!(bs_price(&q), 1.0 - (-0.1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn norm_cdf_tails() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-16);
        // Φ(-10) = 7.6198530241604696e-24
        assert!((norm_cdf(-10.0) / 7.619_853_024_160_47e-24 - 1.0).abs() < 1e-12);
        assert_abs_diff_eq!(norm_cdf(1.959963984540054), 0.975, epsilon = 1e-15);
    }

    #[test]
    fn round_trip_grid() {
        for i in 0..5 {
            let t = 0.01 + (1.0 - 0.01) * i as f64 / 4.0;
            for j in 0..5 {
                let k = -0.3 + 0.6 * j as f64 / 4.0;
                let kind = OptionKind::otm(k);
                let p = bs_price(&BSQuote { t, k, sigma: 0.2, kind });
                let iv = implied_vol(p, t, k, kind).unwrap();
                assert_abs_diff_eq!(iv, 0.2, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn put_and_parity_call_agree() {
        let (t, k) = (0.3, -0.05);
        let put = bs_price(&BSQuote { t, k, sigma: 0.35, kind: OptionKind::Put });
        let call = put + 1.0 - k.exp();
        let a = implied_vol(put, t, k, OptionKind::Put).unwrap();
        let b = implied_vol(call, t, k, OptionKind::Call).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn band_violations() {
        let (t, k) = (0.25, -0.1);
        let intr = intrinsic(k, OptionKind::Call);
        assert!(matches!(
            implied_vol(intr + 1e-15, t, k, OptionKind::Call),
            Err(Error::NoArbitrageViolation { .. })
        ));
        assert!(implied_vol(intr - 1e-3, t, k, OptionKind::Call).is_err());
        assert!(implied_vol(1.0, t, k, OptionKind::Call).is_err());
    }

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| x * x * x - 2.0, 0.0, 2.0, 1e-15, 100).unwrap();
        assert_abs_diff_eq!(r, 2f64.cbrt(), epsilon = 1e-14);
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }
}
