//! Smile, moderate-deviation, skew and kernel-diagnostic studies with CSV
//! output.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bs::{bs_vega, implied_vol, OptionKind};
use crate::error::{Error, Result};
use crate::gauss_sim::{build_sampler, sample_paths, PathGrid};
use crate::kernels::{limit_kernel, run_diagnostics, speed_gamma, DiagnosticsReport, KernelSpec};
use crate::pricing::{mean_stderr, simulate_log_prices, LogPriceSample, MCConfig, ModelParams};
use crate::ratefn::{
    md_coefficients_for, md_regime, md_smile, rate_curve, skew_asymptote, smile_from_rate, TimeFactor,
};

pub use config::{Experiment, ExperimentConfig, XGrid};

pub const SMILE_CSV_HEADER: &str = "model,t,x,k,mc_price,stderr,implied_vol,asymptote";
pub const MD_CSV_HEADER: &str = "t,ell,iv_mc,iv_md";
pub const SKEW_CSV_HEADER: &str = "t,model,psi,asymptote";

/// 64-bit FNV-1a, used to derive per-cell seeds.
fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of the (model, maturity) cell. With `common_noise` every model at a
/// maturity shares the stream.
pub fn cell_seed(master: u64, tag: &str, maturity: f64, common_noise: bool) -> u64 {
    let mut h = fnv1a(&master.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    if !common_noise {
        h = fnv1a(tag.as_bytes(), h);
    }
    fnv1a(&maturity.to_bits().to_le_bytes(), h)
}

/// Log-moneyness `x √t / γ(t)`, i.e. `x t^{1/2-H}` with the extra
/// logarithmic factor for LOGFBM.
pub fn scaled_log_moneyness(spec: &KernelSpec, x: f64, t: f64) -> Result<f64> {
    Ok(x * t.sqrt() / speed_gamma(spec, t)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.10e}"))
}

/// Implied volatility of an out-of-the-money Monte Carlo price, with the
/// delta-method standard error `stderr / vega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvEstimate {
    pub price: f64,
    pub stderr: f64,
    pub iv: Option<f64>,
    pub iv_stderr: Option<f64>,
}

pub fn otm_implied_vol(sample: &LogPriceSample, k: f64) -> IvEstimate {
    let kind = OptionKind::otm(k);
    let p = sample.price(k, kind);
    let iv = implied_vol(p.price, sample.maturity, k, kind).ok();
    let iv_stderr = iv.map(|s| p.stderr / bs_vega(sample.maturity, k, s));
    IvEstimate { price: p.price, stderr: p.stderr, iv, iv_stderr }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmileRow {
    pub model_tag: String,
    pub maturity: f64,
    pub x: f64,
    pub k: f64,
    pub mc_price: f64,
    pub stderr: f64,
    pub implied_vol: Option<f64>,
    pub iv_stderr: Option<f64>,
    pub asymptote: Option<f64>,
}

impl SmileRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.10e},{:.10e},{:.6e},{},{}",
            self.model_tag,
            self.maturity,
            self.x,
            self.k,
            self.mc_price,
            self.stderr,
            fmt_opt(self.implied_vol),
            fmt_opt(self.asymptote)
        )
    }
}

pub fn smile_csv(rows: &[SmileRow]) -> String {
    let mut out = format!("{SMILE_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn mc_for(cfg: &ExperimentConfig, spec: &KernelSpec, t: f64) -> MCConfig {
    MCConfig { seed: cell_seed(cfg.mc.seed, &spec.tag(), t, cfg.common_noise), ..cfg.mc }
}

/// `Σ(x)` on `xs` for the limit kernel of `spec`; `Σ(0) = σ(0)`. `None`
/// where no limit kernel exists.
pub fn asymptote_curve(spec: &KernelSpec, model: &ModelParams, cfg: &ExperimentConfig, xs: &[f64]) -> Result<Vec<Option<f64>>> {
    let khat = match limit_kernel(spec) {
        Ok(k) => k,
        Err(_) => return Ok(vec![None; xs.len()]),
    };
    let curve = rate_curve(xs, model, &khat, &cfg.ritz)?;
    Ok(curve
        .iter()
        .map(|r| if r.x == 0.0 { Some(model.sigma(0.0)) } else { Some(smile_from_rate(r)) })
        .collect())
}

/// Smile rows for every model, maturity and grid point, in that order.
pub fn compute_smile(cfg: &ExperimentConfig) -> Result<Vec<SmileRow>> {
    let xs = cfg.x_grid.points();
    let mut asymptotes: Vec<(KernelSpec, Vec<Option<f64>>)> = Vec::new();
    let mut rows = Vec::new();
    for spec in cfg.models() {
        let key = limit_kernel(&spec).unwrap_or(spec);
        let asym = match asymptotes.iter().find(|(k, _)| *k == key) {
            Some((_, a)) => a.clone(),
            None => {
                let a = asymptote_curve(&spec, &cfg.model, cfg, &xs)?;
                asymptotes.push((key, a.clone()));
                a
            }
        };
        for &t in &cfg.maturities {
            let sample = simulate_log_prices(&spec, &cfg.model, &mc_for(cfg, &spec, t), t)?;
            for (&x, &asymptote) in xs.iter().zip(&asym) {
                let k = scaled_log_moneyness(&spec, x, t)?;
                let est = otm_implied_vol(&sample, k);
                rows.push(SmileRow {
                    model_tag: spec.tag(),
                    maturity: t,
                    x,
                    k,
                    mc_price: est.price,
                    stderr: est.stderr,
                    implied_vol: est.iv,
                    iv_stderr: est.iv_stderr,
                    asymptote,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdRow {
    pub maturity: f64,
    pub ell: f64,
    pub iv_mc: Option<f64>,
    pub iv_stderr: Option<f64>,
    pub iv_md: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdOutput {
    pub rows: Vec<MdRow>,
    pub warning: Option<String>,
}

impl MdOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "# warning: {w}");
        }
        let _ = writeln!(out, "{MD_CSV_HEADER}");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.10e},{},{:.10e}", r.maturity, r.ell, fmt_opt(r.iv_mc), r.iv_md);
        }
        out
    }
}

/// MC implied vol at `ℓ_t = x t^{1/2-H+β}` next to the moderate-deviation
/// expansion, for the configured kernel.
pub fn compute_md(cfg: &ExperimentConfig) -> Result<MdOutput> {
    let spec = cfg.kernel;
    let h = spec.hurst;
    let khat = limit_kernel(&spec)?;
    let coeffs = md_coefficients_for(&cfg.model, &khat, cfg.ritz.quad_n.max(128))?;
    let warning = md_regime(cfg.beta, h).map(|w| w.to_string());
    let x = cfg.x_fixed;
    let mut rows = Vec::new();
    for &t in &cfg.maturities {
        let ell = x * t.powf(0.5 - h + cfg.beta);
        let sample = simulate_log_prices(&spec, &cfg.model, &mc_for(cfg, &spec, t), t)?;
        let est = otm_implied_vol(&sample, ell);
        rows.push(MdRow {
            maturity: t,
            ell,
            iv_mc: est.iv,
            iv_stderr: est.iv_stderr,
            iv_md: md_smile(x, t, cfg.beta, &coeffs, h)?,
        });
    }
    Ok(MdOutput { rows, warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkewRow {
    pub maturity: f64,
    pub model_tag: String,
    pub psi: Option<f64>,
    pub psi_stderr: Option<f64>,
    pub asymptote: f64,
    pub formal: bool,
}

pub fn skew_csv(rows: &[SkewRow]) -> String {
    let mut out = format!("{SKEW_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:.15e}", r.maturity, r.model_tag, fmt_opt(r.psi), r.asymptote);
    }
    out
}

/// `Ψ = |σ(k) - σ(-k)| / (2k)` from the out-of-the-money legs at `±k` on
/// common paths. The standard error applies the delta method path by path,
/// so the correlation between the two legs is accounted for.
pub fn finite_difference_skew(sample: &LogPriceSample, k: f64) -> (Option<f64>, Option<f64>) {
    let up = otm_implied_vol(sample, k);
    let down = otm_implied_vol(sample, -k);
    let (Some(su), Some(sd)) = (up.iv, down.iv) else {
        return (None, None);
    };
    let t = sample.maturity;
    let (vu, vd) = (bs_vega(t, k, su), bs_vega(t, -k, sd));
    let pu = sample.payoffs(k, OptionKind::otm(k));
    let pd = sample.payoffs(-k, OptionKind::otm(-k));
    let g: Vec<f64> = pu.iter().zip(&pd).map(|(a, b)| a / vu - b / vd).collect();
    let (_, se) = mean_stderr(&g, sample.antithetic);
    let psi = (su - sd).abs() / (2.0 * k);
    (Some(psi), Some(se / (2.0 * k)))
}

/// `|Σ'(0)|` for the limit kernel of `spec`, or the finite-difference slope
/// of the formal H = 0 kernel for LOGFBM at H = 0.
fn skew_level(spec: &KernelSpec, cfg: &ExperimentConfig) -> Result<(f64, bool)> {
    match limit_kernel(spec) {
        Ok(khat) => Ok((md_coefficients_for(&cfg.model, &khat, cfg.ritz.quad_n.max(128))?.sigma1.abs(), false)),
        Err(_) => {
            let s = skew_asymptote(cfg.x_fixed, &cfg.model, spec, &cfg.ritz)?;
            Ok((s.slope.abs(), s.formal))
        }
    }
}

pub fn compute_skew(cfg: &ExperimentConfig) -> Result<Vec<SkewRow>> {
    let mut rows = Vec::new();
    for spec in cfg.models() {
        let (level, formal) = skew_level(&spec, cfg)?;
        let tf = TimeFactor::for_spec(&spec);
        for &t in &cfg.maturities {
            let k = scaled_log_moneyness(&spec, cfg.x_fixed, t)?;
            let sample = simulate_log_prices(&spec, &cfg.model, &mc_for(cfg, &spec, t), t)?;
            let (psi, psi_stderr) = finite_difference_skew(&sample, k);
            rows.push(SkewRow {
                maturity: t,
                model_tag: spec.tag(),
                psi,
                psi_stderr,
                asymptote: level * tf.eval(t),
                formal,
            });
        }
    }
    Ok(rows)
}

pub fn compute_diag(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    run_diagnostics(&cfg.kernel, &cfg.epsilons, cfg.diag_grid_n, cfg.diag_quad_n, &cfg.a1_deltas)
}

/// File-name-safe form of a model tag, e.g. `FOU_a_1`.
pub fn tag_slug(tag: &str) -> String {
    let mut s: String = tag.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    while s.contains("__") {
        s = s.replace("__", "_");
    }
    s.trim_matches('_').to_string()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    fn write(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }
}

const SMILE_PLOT: &str = r##"# Plots smile_all.csv: one panel per model (smiles across maturities)
# and one panel per maturity (models side by side).
import sys
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "smile_all.csv", na_values="NA")
for key, by in (("model", "t"), ("t", "model")):
    groups = list(df.groupby(key))
    fig, axes = plt.subplots(1, len(groups), figsize=(5 * len(groups), 4), squeeze=False)
    for ax, (name, g) in zip(axes[0], groups):
        for label, h in g.groupby(by):
            ax.plot(h.x, h.implied_vol, marker=".", label=f"{by}={label}")
        first = g[g[by] == g[by].iloc[0]]
        ax.plot(first.x, first.asymptote, "k--", label="asymptote")
        ax.set_title(f"{key}={name}")
        ax.set_xlabel("x")
        ax.legend()
    fig.savefig(f"smile_by_{key}.png", dpi=120)
"##;

const MD_PLOT: &str = r##"import sys
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "md.csv", comment="#", na_values="NA")
plt.plot(df.t, df.iv_mc, "o-", label="Monte Carlo")
plt.plot(df.t, df.iv_md, "s--", label="expansion")
plt.xlabel("t")
plt.legend()
plt.savefig("md.png", dpi=120)
"##;

const SKEW_PLOT: &str = r##"import sys
import pandas as pd
import matplotlib.pyplot as plt

df = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "skew.csv", na_values="NA")
for model, g in df.groupby("model"):
    line, = plt.loglog(g.t, g.psi, "o-", label=f"{model} MC")
    plt.loglog(g.t, g.asymptote, "--", color=line.get_color(), label=f"{model} asymptote")
plt.xlabel("t")
plt.legend()
plt.savefig("skew.png", dpi=120)
"##;

/// Optional dump of the first 100 simulated paths of the first model and
/// maturity.
fn dump_paths(cfg: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let spec = cfg.models()[0];
    let t = cfg.maturities[0];
    let sampler = build_sampler(&spec, PathGrid::new(t, cfg.mc.steps)?, cfg.mc.quad_n)?;
    let batch = sample_paths(&sampler, cell_seed(cfg.mc.seed, &spec.tag(), t, cfg.common_noise), cfg.mc.paths.min(100))?;
    summary.write(&cfg.out_dir, &format!("paths_{}_t{t}.csv", tag_slug(&spec.tag())), &batch.to_csv())
}

/// Runs the configured experiment and writes its files into `cfg.out_dir`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    let dir = cfg.out_dir.as_path();
    let mut summary = RunSummary::default();
    match cfg.experiment {
        Experiment::Smile => {
            let rows = compute_smile(cfg)?;
            for spec in cfg.models() {
                let tag = spec.tag();
                let own: Vec<SmileRow> = rows.iter().filter(|r| r.model_tag == tag).cloned().collect();
                summary.write(dir, &format!("smile_{}.csv", tag_slug(&tag)), &smile_csv(&own))?;
            }
            summary.write(dir, "smile_all.csv", &smile_csv(&rows))?;
            summary.write(dir, "plot_smile.py", SMILE_PLOT)?;
            let failed = rows.iter().filter(|r| r.implied_vol.is_none()).count();
            if failed > 0 {
                summary.warnings.push(format!("{failed} smile rows without implied vol (NA)"));
            }
        }
        Experiment::Md => {
            let out = compute_md(cfg)?;
            summary.warnings.extend(out.warning.clone());
            summary.write(dir, "md.csv", &out.to_csv())?;
            summary.write(dir, "plot_md.py", MD_PLOT)?;
        }
        Experiment::Skew => {
            let rows = compute_skew(cfg)?;
            if rows.iter().any(|r| r.formal) {
                summary.warnings.push("LOGFBM at H=0: skew asymptote is formal (no LDP)".into());
            }
            summary.write(dir, "skew.csv", &skew_csv(&rows))?;
            summary.write(dir, "plot_skew.py", SKEW_PLOT)?;
        }
        Experiment::Diag => {
            let report = compute_diag(cfg)?;
            if report.no_ldp {
                summary.warnings.push(format!("{}: no-LDP, limit kernel undefined", report.tag));
            }
            summary.write(dir, "diag.txt", &report.to_text())?;
            summary.write(dir, "diag.csv", &report.to_csv())?;
        }
    }
    if cfg.dump_paths && cfg.experiment != Experiment::Diag {
        dump_paths(cfg, &mut summary)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(experiment: Experiment) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(experiment);
        cfg.mc.paths = 2000;
        cfg.mc.steps = 20;
        cfg.maturities = vec![0.05, 0.5];
        cfg.x_grid = XGrid { min: -0.2, max: 0.2, count: 5 };
        cfg.ritz.quad_n = 64;
        cfg
    }

    #[test]
    fn seeds_differ_by_tag_unless_common() {
        let a = cell_seed(1, "FBM", 0.1, false);
        assert_ne!(a, cell_seed(1, "FOU(a=1)", 0.1, false));
        assert_ne!(a, cell_seed(1, "FBM", 0.2, false));
        assert_eq!(cell_seed(1, "FBM", 0.1, true), cell_seed(1, "FOU(a=1)", 0.1, true));
        assert_eq!(a, cell_seed(1, "FBM", 0.1, false));
    }

    #[test]
    fn moneyness_scaling() {
        let k = scaled_log_moneyness(&KernelSpec::fbm(0.3), 0.1, 0.04).unwrap();
        assert!((k - 0.1 * 0.04f64.powf(0.2)).abs() < 1e-15);
        let lf = KernelSpec::log_fbm(1.0, 0.2, 1.5);
        let k = scaled_log_moneyness(&lf, 0.1, 0.04).unwrap();
        assert!((k - 0.1 * 0.04f64.powf(0.3) * (-0.04f64.ln()).powf(1.5)).abs() < 1e-14);
    }

    #[test]
    fn flat_smile_run() {
        let mut cfg = small(Experiment::Smile);
        cfg.model = ModelParams::new(-0.7, 0.2, 0.0).unwrap();
        cfg.fou_a = vec![1.0];
        let rows = compute_smile(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 5);
        for r in &rows {
            let iv = r.implied_vol.unwrap();
            assert!((iv - 0.2).abs() < 4.0 * r.iv_stderr.unwrap() + 1e-3, "{r:?}");
            assert!((r.asymptote.unwrap() - 0.2).abs() < 1e-3);
        }
        let csv = smile_csv(&rows);
        assert!(csv.starts_with(SMILE_CSV_HEADER));
        assert_eq!(csv.lines().count(), rows.len() + 1);
    }

    #[test]
    fn md_rows_and_warning() {
        let mut cfg = small(Experiment::Md);
        let out = compute_md(&cfg).unwrap();
        assert!(out.warning.is_none());
        assert_eq!(out.rows.len(), 2);
        cfg.beta = 0.2;
        cfg.x_fixed = 0.0;
        let out = compute_md(&cfg).unwrap();
        assert!(out.to_csv().starts_with("# warning"));
        assert!(out.rows.iter().all(|r| r.iv_md == 0.2));
    }

    #[test]
    fn skew_asymptote_power_law() {
        let mut cfg = small(Experiment::Skew);
        cfg.maturities = vec![0.1, 0.2, 0.5];
        let rows = compute_skew(&cfg).unwrap();
        let slope = (rows[2].asymptote / rows[0].asymptote).ln() / (0.5f64 / 0.1).ln();
        assert!((slope - (0.3 - 0.5)).abs() < 1e-12);
        assert!(skew_csv(&rows).starts_with(SKEW_CSV_HEADER));
    }

    #[test]
    fn slugs() {
        assert_eq!(tag_slug("FOU(a=1)"), "FOU_a_1");
        assert_eq!(tag_slug("LOGFBM(p=1.5)"), "LOGFBM_p_1.5");
        assert_eq!(tag_slug("FBM"), "FBM");
    }
}
