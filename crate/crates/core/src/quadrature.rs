//! Composite Gauss–Legendre rules with geometric grading toward singular
//! endpoints.
//!
//! Volterra kernels carry integrable power singularities at the diagonal
//! (`(t-s)^(H-1/2)`) and, for the fBM kernel, at `s = 0`. A graded rule
//! places panels whose widths shrink geometrically toward the singular end,
//! so each panel sees an integrand that is analytic on a neighbourhood
//! proportional to its width. The innermost panel is integrated after a
//! power substitution `v = c * y^10`, which flattens algebraic endpoint
//! behaviour. No node of the reference rule lands on an endpoint.

use std::f64::consts::PI;

/// Gauss–Legendre order used inside each panel.
pub const PANEL_ORDER: usize = 8;

/// Width ratio between neighbouring graded panels.
const RATIO: f64 = 0.35;
const TAIL_POWER: i32 = 10;
const MIN_GRADED_PANELS: usize = 4;
/// Largest double below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and P_{n-1}(z)
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() <= 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Which endpoints of the reference interval carry a singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoints {
    Smooth,
    Left,
    Right,
    Both,
}

/// A quadrature rule on the reference interval `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    /// Single Gauss–Legendre panel on `[0, 1]`.
    pub fn gauss(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Rule {
            nodes: x.iter().map(|&x| 0.5 * (x + 1.0)).collect(),
            weights: w.iter().map(|&w| 0.5 * w).collect(),
        }
    }

    /// Composite rule with roughly `quad_n` nodes (rounded up to a multiple
    /// of [`PANEL_ORDER`], and never fewer than four panels per graded end),
    /// graded toward the singular endpoints.
    pub fn graded(quad_n: usize, ends: Endpoints) -> Self {
        let panels = quad_n.div_ceil(PANEL_ORDER).max(1);
        // graded sides need a few regular panels before the substituted tail
        let graded = panels.max(MIN_GRADED_PANELS);
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let mut rule = Rule {
            nodes: Vec::with_capacity(panels * PANEL_ORDER),
            weights: Vec::with_capacity(panels * PANEL_ORDER),
        };
        match ends {
            Endpoints::Smooth => {
                let h = 1.0 / panels as f64;
                for p in 0..panels {
                    let a = p as f64 * h;
                    for (x, w) in gx.iter().zip(&gw) {
                        rule.nodes.push(a + 0.5 * h * (x + 1.0));
                        rule.weights.push(0.5 * h * w);
                    }
                }
            }
            Endpoints::Left => {
                rule.push_left_graded(graded, 0.0, 1.0, false, &gx, &gw);
            }
            Endpoints::Right => {
                rule.push_left_graded(graded, 0.0, 1.0, true, &gx, &gw);
            }
            Endpoints::Both => {
                let panels = panels.max(2 * MIN_GRADED_PANELS);
                let left = panels.div_ceil(2);
                rule.push_left_graded(left, 0.0, 0.5, false, &gx, &gw);
                rule.push_left_graded(panels - left, 0.5, 0.5, true, &gx, &gw);
            }
        }
        rule
    }

    /// Appends `panels` panels covering `[offset, offset + len]`, graded
    /// toward `offset` (or toward `offset + len` when `mirror`).
    fn push_left_graded(
        &mut self,
        panels: usize,
        offset: f64,
        len: f64,
        mirror: bool,
        gx: &[f64],
        gw: &[f64],
    ) {
        let place = |v: f64| {
            let x = if mirror {
                offset + len * (1.0 - v)
            } else {
                offset + len * v
            };
            x.clamp(f64::MIN_POSITIVE, BELOW_ONE)
        };
        let mut hi = 1.0;
        for _ in 1..panels {
            let lo = hi * RATIO;
            let half = 0.5 * (hi - lo);
            for (x, w) in gx.iter().zip(gw) {
                self.nodes.push(place(lo + half * (x + 1.0)));
                self.weights.push(len * half * w);
            }
            hi = lo;
        }
        // innermost panel [0, hi] under v = hi * y^p
        let p = TAIL_POWER as f64;
        for (x, w) in gx.iter().zip(gw) {
            let y = 0.5 * (x + 1.0);
            let v = hi * y.powi(TAIL_POWER);
            let jac = hi * p * y.powi(TAIL_POWER - 1);
            self.nodes.push(place(v));
            self.weights.push(len * 0.5 * w * jac);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (a + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}
