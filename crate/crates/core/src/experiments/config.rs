//! Plain-text experiment configuration: `[section]` headers followed by
//! `key = value` lines, `#` starting a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::pricing::{MCConfig, ModelParams};
use crate::ratefn::{OptimizerControls, RitzConfig};

const SECTIONS: [&str; 5] = ["kernel", "model", "mc", "ritz", "experiment"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Smile,
    Md,
    Skew,
    Diag,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Smile => "smile",
            Experiment::Md => "md",
            Experiment::Skew => "skew",
            Experiment::Diag => "diag",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "smile" => Ok(Experiment::Smile),
            "md" => Ok(Experiment::Md),
            "skew" => Ok(Experiment::Skew),
            "diag" => Ok(Experiment::Diag),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

/// `count` equidistant points on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl XGrid {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.max } else { self.min + step * i as f64 })
            // snap the midpoint of symmetric grids to an exact zero
            .map(|x| if x.abs() < 1e-14 * (self.max - self.min) { 0.0 } else { x })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub kernel: KernelSpec,
    /// Mean-reversion speeds of extra FOU models compared against `kernel`.
    pub fou_a: Vec<f64>,
    pub model: ModelParams,
    pub mc: MCConfig,
    /// Same random stream for every model at a given maturity.
    pub common_noise: bool,
    pub ritz: RitzConfig,
    pub maturities: Vec<f64>,
    pub x_grid: XGrid,
    pub beta: f64,
    pub x_fixed: f64,
    pub out_dir: PathBuf,
    pub epsilons: Vec<f64>,
    pub diag_grid_n: usize,
    pub diag_quad_n: usize,
    pub a1_deltas: Vec<f64>,
    pub dump_paths: bool,
}

impl ExperimentConfig {
    /// Settings of the rough-volatility smile study: fBM with `H = 0.3`,
    /// `ρ = -0.7`, `σ0 = 0.2`, `η = 1.5`, at desk scale.
    pub fn defaults(experiment: Experiment) -> Self {
        let eta = if experiment == Experiment::Md { 0.2 } else { 1.5 };
        ExperimentConfig {
            experiment,
            kernel: KernelSpec::fbm(0.3),
            fou_a: Vec::new(),
            model: ModelParams::new(-0.7, 0.2, eta).expect("valid defaults"),
            mc: MCConfig::default(),
            common_noise: false,
            ritz: RitzConfig::default(),
            maturities: vec![0.05, 0.1, 0.2, 0.3, 0.5],
            x_grid: XGrid { min: -0.2, max: 0.2, count: 50 },
            beta: 0.125,
            x_fixed: if experiment == Experiment::Md { 0.3 } else { 0.01 },
            out_dir: PathBuf::from("out"),
            epsilons: vec![0.1, 0.01, 0.001],
            diag_grid_n: 16,
            diag_quad_n: 256,
            a1_deltas: vec![0.01, 0.02, 0.04, 0.08],
            dump_paths: false,
        }
    }

    /// Kernels simulated by smile and skew runs: the configured kernel
    /// followed by the extra FOU models.
    pub fn models(&self) -> Vec<KernelSpec> {
        let mut out = vec![self.kernel];
        for &a in &self.fou_a {
            let spec = KernelSpec::fou(self.kernel.hurst, a);
            if !out.contains(&spec) {
                out.push(spec);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.maturities.is_empty() {
            return bad("maturities must not be empty".into());
        }
        if let Some(t) = self.maturities.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
            return bad(format!("maturity {t} outside (0,1)"));
        }
        if self.x_grid.count < 2 || !(self.x_grid.min < self.x_grid.max) {
            return bad(format!("x grid needs count >= 2 and min < max, got {:?}", self.x_grid));
        }
        for spec in self.models() {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.fou_a.iter().any(|&a| !(a >= 0.0)) {
            return bad("fou_a entries must be >= 0".into());
        }
        self.mc.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.ritz.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.experiment == Experiment::Skew && !(self.x_fixed > 0.0) {
            return bad(format!("skew needs x_fixed > 0, got {}", self.x_fixed));
        }
        if self.experiment == Experiment::Md && !(self.beta > 0.0 && self.beta < 0.5) {
            return bad(format!("beta={} outside (0,1/2)", self.beta));
        }
        Ok(())
    }

    /// Applies the paper-scale Monte Carlo settings (`10^6` paths, 500 steps).
    pub fn paper_scale(&mut self) {
        self.mc.paths = 1_000_000;
        self.mc.steps = 500;
    }
}

type Sections = BTreeMap<String, BTreeMap<String, String>>;

fn parse_sections(text: &str) -> Result<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_ascii_lowercase();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(Error::Config(format!("line {}: unknown section [{name}]", lineno + 1)));
            }
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some(section) = &current else {
            return Err(Error::Config(format!("line {}: key outside any section", lineno + 1)));
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        out.get_mut(section).expect("section inserted").insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Typed access to one section; every key must be consumed.
struct Section<'a> {
    name: &'a str,
    pairs: BTreeMap<String, String>,
}

impl Section<'_> {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.pairs.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{}] {key}: cannot parse `{v}`", self.name))),
        }
    }

    fn take_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.pairs.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Config(format!("[{}] {key}: bad number `{s}`", self.name)))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn finish(self) -> Result<()> {
        match self.pairs.keys().next() {
            Some(k) => Err(Error::Config(format!("[{}]: unknown key `{k}`", self.name))),
            None => Ok(()),
        }
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut sections = parse_sections(text)?;
        let mut section = |name: &'static str| Section { name, pairs: sections.remove(name).unwrap_or_default() };

        let mut exp = section("experiment");
        let experiment: Experiment = exp
            .take::<String>("type")?
            .ok_or_else(|| Error::Config("[experiment] needs `type`".into()))?
            .parse()?;
        let mut cfg = ExperimentConfig::defaults(experiment);

        let kernel = section("kernel");
        if !kernel.pairs.is_empty() {
            let mut pairs = kernel.pairs;
            if let Some(f) = pairs.get("family") {
                // accept lower-case family names
                let fam: KernelFamily = f.to_ascii_uppercase().parse()?;
                pairs.insert("family".into(), fam.as_str().to_string());
            }
            let unknown: Vec<_> = pairs.keys().filter(|k| !["family", "H", "a", "C", "p"].contains(&k.as_str())).collect();
            if let Some(k) = unknown.first() {
                return Err(Error::Config(format!("[kernel]: unknown key `{k}`")));
            }
            cfg.kernel = KernelSpec::from_pairs(&pairs)?;
        }

        let mut model = section("model");
        let rho = model.take("rho")?.unwrap_or(cfg.model.rho);
        let sigma0 = model.take("sigma0")?.unwrap_or(cfg.model.sigma0);
        let eta = model.take("eta")?.unwrap_or(cfg.model.eta);
        model.finish()?;
        cfg.model = ModelParams::new(rho, sigma0, eta).map_err(|e| Error::Config(e.to_string()))?;

        let mut mc = section("mc");
        cfg.mc.paths = mc.take("paths")?.unwrap_or(cfg.mc.paths);
        cfg.mc.steps = mc.take("steps")?.unwrap_or(cfg.mc.steps);
        cfg.mc.seed = mc.take("seed")?.unwrap_or(cfg.mc.seed);
        cfg.mc.antithetic = mc.take("antithetic")?.unwrap_or(cfg.mc.antithetic);
        cfg.mc.quad_n = mc.take("quad_n")?.unwrap_or(cfg.mc.quad_n);
        cfg.common_noise = mc.take("common_noise")?.unwrap_or(cfg.common_noise);
        mc.finish()?;

        let mut ritz = section("ritz");
        let d = OptimizerControls::default();
        cfg.ritz = RitzConfig {
            basis_n: ritz.take("basis_n")?.unwrap_or(cfg.ritz.basis_n),
            quad_n: ritz.take("quad_n")?.unwrap_or(cfg.ritz.quad_n),
            optimizer: OptimizerControls {
                max_iters: ritz.take("max_iters")?.unwrap_or(d.max_iters),
                restarts: ritz.take("restarts")?.unwrap_or(d.restarts),
                tolerance: ritz.take("tolerance")?.unwrap_or(d.tolerance),
            },
            continuation: ritz.take("continuation")?.unwrap_or(cfg.ritz.continuation),
        };
        ritz.finish()?;

        if let Some(m) = exp.take_list("maturities")? {
            cfg.maturities = m;
        }
        cfg.x_grid.min = exp.take("x_min")?.unwrap_or(cfg.x_grid.min);
        cfg.x_grid.max = exp.take("x_max")?.unwrap_or(cfg.x_grid.max);
        cfg.x_grid.count = exp.take("x_count")?.unwrap_or(cfg.x_grid.count);
        cfg.beta = exp.take("beta")?.unwrap_or(cfg.beta);
        cfg.x_fixed = exp.take("x_fixed")?.unwrap_or(cfg.x_fixed);
        cfg.out_dir = exp.take::<String>("out_dir")?.map(PathBuf::from).unwrap_or(cfg.out_dir);
        if let Some(a) = exp.take_list("fou_a")? {
            cfg.fou_a = a;
        }
        if let Some(e) = exp.take_list("epsilons")? {
            cfg.epsilons = e;
        }
        cfg.diag_grid_n = exp.take("grid_n")?.unwrap_or(cfg.diag_grid_n);
        cfg.diag_quad_n = exp.take("diag_quad_n")?.unwrap_or(cfg.diag_quad_n);
        if let Some(d) = exp.take_list("a1_deltas")? {
            cfg.a1_deltas = d;
        }
        cfg.dump_paths = exp.take("dump_paths")?.unwrap_or(cfg.dump_paths);
        if exp.take::<String>("paper_scale")?.is_some_and(|v| v == "true") {
            cfg.paper_scale();
        }
        exp.finish()?;

        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# smile study
[experiment]
type = smile
maturities = 0.05, 0.2, 0.5
x_min = -0.2
x_max = 0.2
x_count = 21
fou_a = 1, 2

[kernel]
family = fbm
H = 0.3

[model]
rho = -0.7
sigma0 = 0.2
eta = 1.5

[mc]
paths = 2000
steps = 50
seed = 7
";

    #[test]
    fn parses_sample() {
        let cfg: ExperimentConfig = SAMPLE.parse().unwrap();
        assert_eq!(cfg.experiment, Experiment::Smile);
        assert_eq!(cfg.maturities, vec![0.05, 0.2, 0.5]);
        assert_eq!(cfg.mc.paths, 2000);
        assert_eq!(cfg.mc.seed, 7);
        assert_eq!(cfg.x_grid.points().len(), 21);
        assert_eq!(cfg.x_grid.points()[10], 0.0);
        let tags: Vec<_> = cfg.models().iter().map(|m| m.tag()).collect();
        assert_eq!(tags, ["FBM", "FOU(a=1)", "FOU(a=2)"]);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "[experiment]\ntype = smile\n[model]\nrho = 2\n",
            "[experiment]\ntype = smile\nmaturities = 1.5\n",
            "[experiment]\ntype = smile\nx_count = 1\n",
            "[experiment]\ntype = bogus\n",
            "[experiment]\ntype = smile\n[mc]\nfoo = 1\n",
            "[weird]\n",
            "type = smile\n",
            "[experiment]\ntype = smile\n[kernel]\nfamily = fbm\nH = 1.2\n",
        ] {
            let err = bad.parse::<ExperimentConfig>().unwrap_err();
            assert!(err.is_config(), "{bad}: {err}");
        }
    }

    #[test]
    fn md_defaults() {
        let cfg: ExperimentConfig = "[experiment]\ntype = md\n".parse().unwrap();
        assert_eq!((cfg.model.eta, cfg.x_fixed, cfg.beta), (0.2, 0.3, 0.125));
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = XGrid { min: -0.2, max: 0.2, count: 50 };
        let p = g.points();
        assert_eq!((p[0], p[49]), (-0.2, 0.2));
    }
}
