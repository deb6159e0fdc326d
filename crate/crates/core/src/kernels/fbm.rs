//! Molchan–Golosov kernel of fractional Brownian motion.
//!
//! For `0 < s < t`,
//!
//! ```text
//! K_H(t,s) = c_H [ (t/s)^(H-1/2) (t-s)^(H-1/2)
//!                  - (H-1/2) s^(1/2-H) ∫_s^t u^(H-3/2) (u-s)^(H-1/2) du ]
//! ```
//!
//! After `u = s + (t-s) v` the inner integral becomes
//! `(t-s)^(2H-1) G(r)` with `r = s/(t-s)` and
//! `G(r) = ∫_0^1 (r+v)^(H-3/2) v^(H-1/2) dv`. `G` is evaluated on panels
//! graded geometrically toward `v = 0` down to a depth proportional to `r`;
//! below that depth `(r+v)^(H-3/2)` is expanded in a binomial series and the
//! remaining piece is integrated exactly against `v^(H-1/2)`.

use crate::quadrature::gauss_legendre;

const RATIO: f64 = 0.25;
const ORDER: usize = 12;
const MAX_LEVELS: usize = 60;
const SERIES_TERMS: usize = 14;
/// Series is only used where `c / r` is below this.
const SERIES_RADIUS: f64 = 0.05;

#[derive(Debug, Clone)]
pub(crate) struct FbmKernel {
    h: f64,
    c_h: f64,
    /// `(v, w * v^(H-1/2))` for each level, ORDER entries per level.
    panels: Vec<(f64, f64)>,
    /// binom(H-3/2, k) / (k + H + 1/2)
    series: [f64; SERIES_TERMS],
}

pub(crate) fn c_h(h: f64) -> f64 {
    let num = 2.0 * h * libm::tgamma(1.5 - h);
    let den = libm::tgamma(h + 0.5) * libm::tgamma(2.0 - 2.0 * h);
    (num / den).sqrt()
}

impl FbmKernel {
    pub(crate) fn new(h: f64) -> Self {
        let (gx, gw) = gauss_legendre(ORDER);
        let mut panels = Vec::with_capacity(MAX_LEVELS * ORDER);
        let mut hi = 1.0;
        for _ in 0..MAX_LEVELS {
            let lo = hi * RATIO;
            let half = 0.5 * (hi - lo);
            for (x, w) in gx.iter().zip(&gw) {
                let v = lo + half * (x + 1.0);
                panels.push((v, half * w * v.powf(h - 0.5)));
            }
            hi = lo;
        }
        let beta = h - 1.5;
        let mut series = [0.0; SERIES_TERMS];
        let mut binom = 1.0;
        for (k, c) in series.iter_mut().enumerate() {
            *c = binom / (k as f64 + h + 0.5);
            binom *= (beta - k as f64) / (k as f64 + 1.0);
        }
        FbmKernel {
            h,
            c_h: c_h(h),
            panels,
            series,
        }
    }

    /// `G(r) = ∫_0^1 (r+v)^(H-3/2) v^(H-1/2) dv` for `r > 0`.
    pub(crate) fn inner(&self, r: f64) -> f64 {
        let h = self.h;
        let e = h - 1.5;
        let mut levels = 0;
        let mut c = 1.0;
        while c > SERIES_RADIUS * r && levels < MAX_LEVELS {
            c *= RATIO;
            levels += 1;
        }
        let mut acc = 0.0;
        for &(v, w) in &self.panels[..levels * ORDER] {
            acc += w * (r + v).powf(e);
        }
        // ∫_0^c v^(H-1/2) (r+v)^(H-3/2) dv = r^(H-3/2) Σ_k binom(H-3/2,k) r^-k c^(k+H+1/2)/(k+H+1/2)
        let z = c / r;
        let mut tail = 0.0;
        let mut zk = 1.0;
        for coef in &self.series {
            tail += coef * zk;
            zk *= z;
        }
        acc + tail * r.powf(e) * c.powf(h + 0.5)
    }

    /// Kernel value for `0 <= s < t`; `+inf` at `s = 0` when `H != 1/2`.
    pub(crate) fn eval(&self, t: f64, s: f64) -> f64 {
        let h = self.h;
        if s >= t {
            return 0.0;
        }
        if h == 0.5 {
            return 1.0;
        }
        if s <= 0.0 {
            return f64::INFINITY;
        }
        let d = t - s;
        let first = (t / s).powf(h - 0.5) * d.powf(h - 0.5);
        let second = (h - 0.5) * s.powf(0.5 - h) * d.powf(2.0 * h - 1.0) * self.inner(s / d);
        self.c_h * (first - second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // For H < 1/2: G(r)·(t-s)^{2H-1} = s^{2H-1} [B(1-2H, H+1/2) - B(s/t; 1-2H, H+1/2)]
    fn inner_via_beta(h: f64, r: f64) -> f64 {
        use statrs::function::beta::{beta, beta_reg};
        let (a, b) = (1.0 - 2.0 * h, h + 0.5);
        let x = r / (1.0 + r); // s/t with t-s = 1
        let full = beta(a, b);
        let upper = full * (1.0 - beta_reg(a, b, x));
        r.powf(2.0 * h - 1.0) * upper
    }

    #[test]
    fn inner_integral_matches_incomplete_beta() {
        for &h in &[0.1, 0.3, 0.45] {
            let k = FbmKernel::new(h);
            for &r in &[1e-8, 1e-4, 0.01, 0.3, 1.0, 7.0, 250.0] {
                let got = k.inner(r);
                let want = inner_via_beta(h, r);
                assert!(
                    ((got - want) / want).abs() < 1e-10,
                    "H={h} r={r}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn c_half_is_one() {
        assert!((c_h(0.5) - 1.0).abs() < 1e-14);
    }
}
