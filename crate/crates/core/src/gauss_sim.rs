//! Exact joint simulation of `(V_{t_1..t_N}, B_{t_1..t_N})` on a uniform
//! grid through a Cholesky factor of their covariance.
//!
//! All covariance blocks are assembled from one shared set of quadrature
//! nodes: cell `[t_{c-1}, t_c]` carries a rule graded toward `t_c` (and also
//! toward 0 in the first cell). With `φ_i(u) = √w K(t_i,u)` the V-block is
//! `ΦΦᵀ`, the cross block is `Σ √w φ_i(u)` over nodes below `t_j`, and the
//! Brownian block is `min(t_i,t_j)`. The assembled matrix is then a Gram
//! matrix and positive semidefinite up to round-off.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ndarray::{s, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::kernels::{Kernel, KernelFamily, KernelSpec, HORIZON};
use crate::quadrature::{Endpoints, Rule};

/// Paths per work unit. Chunks start at multiples of this global index, so
/// results do not depend on how chunks are spread over threads.
pub const CHUNK: usize = 512;

const JITTERS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGrid {
    pub maturity: f64,
    pub steps: usize,
}

impl PathGrid {
    pub fn new(maturity: f64, steps: usize) -> Result<Self> {
        let g = PathGrid { maturity, steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.maturity <= HORIZON) {
            return domain(format!("maturity {} outside (0, {HORIZON}]", self.maturity));
        }
        if self.steps < 2 {
            return domain(format!("need at least 2 steps, got {}", self.steps));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    /// `t_k = k t / N` for `k = 1..=N`.
    pub fn nodes(&self) -> Vec<f64> {
        let n = self.steps as f64;
        (1..=self.steps).map(|k| k as f64 * self.maturity / n).collect()
    }
}

#[derive(Debug, Clone)]
pub struct JointGaussianSampler {
    grid: PathGrid,
    cov: Array2<f64>,
    chol: Array2<f64>,
    jitter_used: f64,
}

/// `m` joint draws; row `p` of `v` and `b` is path `p`.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub v: Array2<f64>,
    pub b: Array2<f64>,
}

impl PathBatch {
    /// CSV with header `path_id,k,t_k,V,B`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("path_id,k,t_k,V,B\n");
        for (p, (vr, br)) in self.v.rows().into_iter().zip(self.b.rows()).enumerate() {
            for (k, ((t, v), b)) in self.times.iter().zip(vr).zip(br).enumerate() {
                let _ = writeln!(out, "{p},{},{t},{v:.17e},{b:.17e}", k + 1);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Nodes per grid cell used in covariance assembly.
fn per_cell_nodes(quad_n: usize) -> usize {
    (quad_n / 8).clamp(16, 64)
}

/// Lower Cholesky factor with diagonal jitter escalation.
pub fn cholesky_with_jitter(cov: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::LengthMismatch { expected: n, got: cov.ncols() });
    }
    let scale = cov.diag().iter().copied().fold(0.0, f64::max);
    let mut last = 0.0;
    for &j in &JITTERS {
        let jitter = j * scale;
        last = jitter;
        if let Some(l) = cholesky(cov, jitter) {
            return Ok((l, jitter));
        }
    }
    Err(Error::Factorization { jitter: last })
}

fn cholesky(a: &Array2<f64>, jitter: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.slice(s![j, ..j]).to_owned();
        let d = a[[j, j]] + jitter - row_j.dot(&row_j);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let v = (a[[i, j]] - l.slice(s![i, ..j]).dot(&row_j)) / d;
            l[[i, j]] = v;
        }
    }
    Some(l)
}

/// Per-path generator: stream `index` of the ChaCha8 generator seeded by `seed`.
pub(crate) fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fills `buf` with the standard normals of path `path`. Under antithetic
/// sampling paths `2j` and `2j+1` share a stream and the odd one is negated.
pub(crate) fn fill_normals(seed: u64, path: usize, antithetic: bool, buf: &mut [f64]) {
    let stream = if antithetic { path / 2 } else { path };
    let mut rng = path_rng(seed, stream as u64);
    for z in buf.iter_mut() {
        *z = StandardNormal.sample(&mut rng);
    }
    if antithetic && path % 2 == 1 {
        buf.iter_mut().for_each(|z| *z = -*z);
    }
}

impl JointGaussianSampler {
    /// Wraps an externally supplied factor.
    pub fn from_parts(grid: PathGrid, cov: Array2<f64>, chol: Array2<f64>, jitter_used: f64) -> Result<Self> {
        grid.validate()?;
        let dim = 2 * grid.steps;
        for m in [&cov, &chol] {
            if m.dim() != (dim, dim) {
                return Err(Error::LengthMismatch { expected: dim, got: m.nrows() });
            }
        }
        Ok(JointGaussianSampler { grid, cov, chol, jitter_used })
    }

    pub fn grid(&self) -> &PathGrid {
        &self.grid
    }

    pub fn cov(&self) -> &Array2<f64> {
        &self.cov
    }

    pub fn chol(&self) -> &Array2<f64> {
        &self.chol
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// Dimension `2N` of the joint vector.
    pub fn dim(&self) -> usize {
        2 * self.grid.steps
    }

    /// Applies `f(path, v, b, extra)` to `m` paths and returns the results in
    /// path order. `extra` holds `n_extra` further standard normals drawn
    /// from the same per-path stream after the joint ones.
    pub fn map_paths<T, F>(&self, seed: u64, m: usize, antithetic: bool, n_extra: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, ArrayView1<f64>, ArrayView1<f64>, &[f64]) -> T + Sync,
    {
        let dim = self.dim();
        let n = self.grid.steps;
        let lt = self.chol.t();
        let chunks = m.div_ceil(CHUNK);
        let per_chunk: Vec<Vec<T>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let len = CHUNK.min(m - start);
                let mut z = Array2::<f64>::zeros((len, dim));
                let mut extra = Array2::<f64>::zeros((len, n_extra));
                let mut buf = vec![0.0; dim + n_extra];
                for r in 0..len {
                    fill_normals(seed, start + r, antithetic, &mut buf);
                    z.row_mut(r).iter_mut().zip(&buf[..dim]).for_each(|(a, b)| *a = *b);
                    extra.row_mut(r).iter_mut().zip(&buf[dim..]).for_each(|(a, b)| *a = *b);
                }
                let x = z.dot(&lt);
                (0..len)
                    .map(|r| {
                        let row = x.row(r);
                        let e = extra.row(r);
                        f(
                            start + r,
                            row.slice(s![..n]),
                            row.slice(s![n..]),
                            e.as_slice().expect("contiguous row"),
                        )
                    })
                    .collect()
            })
            .collect();
        per_chunk.into_iter().flatten().collect()
    }
}

/// Assembles the joint covariance of `(V_{t_1..t_N}, B_{t_1..t_N})` and
/// factorizes it.
pub fn build_sampler(spec: &KernelSpec, grid: PathGrid, quad_n: usize) -> Result<JointGaussianSampler> {
    grid.validate()?;
    if spec.family == KernelFamily::LogFbm && grid.maturity >= HORIZON {
        return domain("LOGFBM simulation needs maturity < 1");
    }
    let kernel = Kernel::with_quad(*spec, quad_n)?;
    let cov = joint_covariance(&kernel, &grid, per_cell_nodes(quad_n));
    let (chol, jitter) = cholesky_with_jitter(&cov)?;
    Ok(JointGaussianSampler { grid, cov, chol, jitter_used: jitter })
}

fn joint_covariance(kernel: &Kernel, grid: &PathGrid, per_cell: usize) -> Array2<f64> {
    let n = grid.steps;
    let ts = grid.nodes();
    let first = Rule::graded(per_cell, Endpoints::Both);
    let rest = Rule::graded(per_cell, Endpoints::Right);
    let mut nodes = Vec::new();
    let mut lo = 0.0;
    for (c, &hi) in ts.iter().enumerate() {
        let rule = if c == 0 { &first } else { &rest };
        nodes.extend(rule.mapped(lo, hi).map(|(u, w)| (c, u, w)));
        lo = hi;
    }
    // phi[q][i] = √w_q K(t_i, u_q)
    let phi: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&(_, u, w)| {
            let sw = w.sqrt();
            kernel.column(u, &ts).into_iter().map(|k| sw * k).collect()
        })
        .collect();
    let q = nodes.len();
    let mut phi_m = Array2::<f64>::zeros((n, q));
    for (j, col) in phi.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            phi_m[[i, j]] = v;
        }
    }
    let vv = phi_m.dot(&phi_m.t());

    // cell_int[i][c] = ∫_{cell c} K(t_i,u) du
    let mut cell_int = Array2::<f64>::zeros((n, n));
    for (&(c, _, w), col) in nodes.iter().zip(&phi) {
        let sw = w.sqrt();
        for (i, &v) in col.iter().enumerate() {
            cell_int[[i, c]] += sw * v;
        }
    }

    let mut cov = Array2::<f64>::zeros((2 * n, 2 * n));
    cov.slice_mut(s![..n, ..n]).assign(&vv);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if j <= i {
                acc += cell_int[[i, j]];
            }
            // ∫_0^{min(t_i,t_j)} K(t_i,u) du
            cov[[i, n + j]] = acc;
            cov[[n + j, i]] = acc;
        }
    }
    for i in 0..n {
        for j in 0..n {
            cov[[n + i, n + j]] = ts[i.min(j)];
        }
    }
    // enforce exact symmetry of the V-block
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = m;
            cov[[j, i]] = m;
        }
    }
    cov
}

/// `m` joint draws `L z`; path `p` uses stream `p` of the generator seeded
/// by `seed`.
pub fn sample_paths(sampler: &JointGaussianSampler, seed: u64, m: usize) -> Result<PathBatch> {
    if m == 0 {
        return domain("sample_paths needs m >= 1");
    }
    let n = sampler.grid.steps;
    let rows = sampler.map_paths(seed, m, false, 0, |_, v, b, _| (v.to_vec(), b.to_vec()));
    let mut v = Array2::<f64>::zeros((m, n));
    let mut b = Array2::<f64>::zeros((m, n));
    for (p, (vr, br)) in rows.into_iter().enumerate() {
        v.row_mut(p).assign(&ArrayView1::from(&vr));
        b.row_mut(p).assign(&ArrayView1::from(&br));
    }
    Ok(PathBatch { times: sampler.grid.nodes(), v, b })
}
