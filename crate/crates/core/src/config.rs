//! Flat `section.key = value` run configuration.
//!
//! Every key has a default; the echo lists all of them so a run can be
//! reproduced from the echo alone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::MeshMode;
use crate::inference::{ParameterizationKind, PriorSpec, SamplerConfig};
use crate::likelihoods::{LinkFunction, TwoPartFamily};
use crate::pipeline::{MeshOptions, RankStrategy, ReplicateOptions};
use crate::rng::derive_seed;
use crate::simulation::{CovariateDesign, CrossGPConfig, MaternParams, SimulationConfig, SiteDesign};
use crate::spectral::PrecisionSpec;

/// Key, default value, note printed next to defaults in the echo.
const KEYS: &[(&str, &str, &str)] = &[
    ("run.seed", "1", "root seed; replicate k uses a derived child seed"),
    ("run.family", "mixture-poisson", ""),
    ("run.link", "logit", ""),
    ("run.methods", "picar", "comma-separated: picar, picar-correlated, frk-bisquare, gold-standard"),
    ("paths.out_dir", "out", ""),
    ("paths.dataset", "", "dataset CSV for mesh, select-rank, fit, predict"),
    ("paths.chain", "", "defaults to <out_dir>/chain.csv"),
    ("paths.summaries", "", "comma-separated summary CSVs; defaults to <out_dir>/summary.csv"),
    ("simulate.replicates", "100", "reference simulation design"),
    ("simulate.n", "1000", "reference simulation design"),
    ("simulate.n_cv", "400", "reference simulation design"),
    ("simulate.nu", "0.5", "reference simulation design"),
    ("simulate.phi", "0.2", "reference simulation design"),
    ("simulate.sigma2", "1", "reference simulation design"),
    ("simulate.rho", "0.7", "reference simulation design"),
    ("simulate.beta_o", "1,1", "reference simulation design"),
    ("simulate.beta_p", "1,1", "reference simulation design"),
    ("simulate.nugget", "0.1", "semi-continuous families only"),
    ("simulate.covariates", "normal:1", "iid standard normal columns"),
    ("simulate.sites", "uniform", "uniform, or grid:NXxNY"),
    ("family.tobit_threshold", "0", "censoring threshold"),
    ("mesh.mode", "regular-lattice", "deterministic lattice"),
    ("mesh.target_vertices", "1000", ""),
    ("mesh.padding", "0.1", "fraction of the location span added per side"),
    ("prior.precision", "icar", "mesh precision Q: icar, car:R, identity"),
    ("prior.beta_var", "100", "beta ~ N(0, beta_var I)"),
    ("prior.tau_shape", "0.002", "tau ~ Gamma(shape, rate), i.e. variance ~ IG(shape, rate)"),
    ("prior.tau_rate", "0.002", "tau ~ Gamma(shape, rate), i.e. variance ~ IG(shape, rate)"),
    ("prior.nugget_shape", "0.002", "nugget ~ IG(shape, scale)"),
    ("prior.nugget_scale", "0.002", "nugget ~ IG(shape, scale)"),
    ("prior.phi_max", "1.4142135623730951", "range ~ Uniform(0, phi_max)"),
    ("rank.p_o", "auto", "fixed occurrence rank, or auto for the heuristic"),
    ("rank.p_p", "auto", "fixed prevalence rank, or auto for the heuristic"),
    ("rank.p_max", "auto", "auto = min(m / 4, 250)"),
    ("rank.h", "25", "number of candidate ranks"),
    ("rank.split_seed", "0", "seed of the 80/20 holdout split"),
    ("mcmc.iterations", "150000", ""),
    ("mcmc.burn_in", "50000", "one third of the iterations"),
    ("mcmc.thin", "1", ""),
    ("mcmc.adapt_window", "100", ""),
    ("mcmc.tau_warmup", "auto", "precisions held fixed at the start of burn-in; auto = half of burn-in"),
    ("mcmc.initial_scale_vector", "0.05", ""),
    ("mcmc.initial_scale_scalar", "0.5", ""),
    ("mcmc.target_vector", "0.234", ""),
    ("mcmc.target_scalar", "0.44", ""),
    ("mcmc.predict_draws", "1000", "evenly spaced retained draws used for prediction"),
    ("report.grid_nx", "50", ""),
    ("report.grid_ny", "50", ""),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse::<f64>(key, s)).collect()
}

fn auto_or<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.trim() == "auto" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                self.explicit.insert(key.to_string());
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key '{key}'"))),
        }
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// Every key in a stable order, with notes on values left at default.
    pub fn echo(&self) -> String {
        let mut out = String::from("# run configuration\n");
        out.push_str("# precisions are parameterized as tau = 1 / variance; a Gamma prior on tau is an\n");
        out.push_str("# inverse-gamma prior on the variance with the same shape and rate\n");
        let mut section = "";
        for (k, _, note) in KEYS {
            let sec = k.split('.').next().unwrap_or("");
            if sec != section {
                out.push('\n');
                section = sec;
            }
            let v = self.get(k);
            if self.explicit.contains(*k) {
                out.push_str(&format!("{k} = {v}\n"));
            } else if note.is_empty() {
                out.push_str(&format!("{k} = {v}  # default\n"));
            } else {
                out.push_str(&format!("{k} = {v}  # default: {note}\n"));
            }
        }
        out
    }

    pub fn seed(&self) -> Result<u64> {
        parse("run.seed", self.get("run.seed"))
    }

    pub fn family(&self) -> Result<TwoPartFamily> {
        let mut f: TwoPartFamily = self.get("run.family").parse()?;
        f.tobit_threshold = parse("family.tobit_threshold", self.get("family.tobit_threshold"))?;
        Ok(f)
    }

    pub fn link(&self) -> Result<LinkFunction> {
        self.get("run.link").parse()
    }

    pub fn methods(&self) -> Result<Vec<ParameterizationKind>> {
        let v = self
            .get("run.methods")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<ParameterizationKind>>>()?;
        if v.is_empty() {
            return Err(Error::Config("run.methods is empty".into()));
        }
        Ok(v)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("paths.out_dir"))
    }

    pub fn dataset_path(&self) -> Result<PathBuf> {
        match self.get("paths.dataset") {
            "" => Err(Error::Config("paths.dataset is not set".into())),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn chain_path(&self) -> PathBuf {
        match self.get("paths.chain") {
            "" => self.out_dir().join("chain.csv"),
            p => PathBuf::from(p),
        }
    }

    pub fn summary_paths(&self) -> Vec<PathBuf> {
        match self.get("paths.summaries") {
            "" => vec![self.out_dir().join("summary.csv")],
            list => list.split(',').map(|s| PathBuf::from(s.trim())).collect(),
        }
    }

    pub fn replicates(&self) -> Result<usize> {
        parse("simulate.replicates", self.get("simulate.replicates"))
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let g = |k: &str| self.get(k);
        let m = MaternParams::new(
            parse("simulate.nu", g("simulate.nu"))?,
            parse("simulate.phi", g("simulate.phi"))?,
            parse("simulate.sigma2", g("simulate.sigma2"))?,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let sites = match g("simulate.sites").trim() {
            "uniform" => SiteDesign::UniformSquare,
            other => {
                let dims = other
                    .strip_prefix("grid:")
                    .and_then(|d| d.split_once('x'))
                    .ok_or_else(|| Error::Config(format!("simulate.sites: unknown design '{other}'")))?;
                SiteDesign::Grid {
                    nx: parse("simulate.sites", dims.0)?,
                    ny: parse("simulate.sites", dims.1)?,
                }
            }
        };
        let cfg = SimulationConfig {
            n: parse("simulate.n", g("simulate.n"))?,
            n_cv: parse("simulate.n_cv", g("simulate.n_cv"))?,
            cross: CrossGPConfig {
                params_o: m,
                params_p: m,
                rho: parse("simulate.rho", g("simulate.rho"))?,
            },
            beta_o: parse_list("simulate.beta_o", g("simulate.beta_o"))?,
            beta_p: parse_list("simulate.beta_p", g("simulate.beta_p"))?,
            nugget: parse("simulate.nugget", g("simulate.nugget"))?,
            covariates: g("simulate.covariates").parse::<CovariateDesign>()?,
            sites,
            link: self.link()?,
        };
        cfg.cross.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn mesh(&self) -> Result<MeshOptions> {
        Ok(MeshOptions {
            mode: self.get("mesh.mode").parse::<MeshMode>()?,
            target_vertices: parse("mesh.target_vertices", self.get("mesh.target_vertices"))?,
            padding: parse("mesh.padding", self.get("mesh.padding"))?,
        })
    }

    pub fn priors(&self) -> Result<PriorSpec> {
        let p = PriorSpec {
            beta_mean: 0.0,
            beta_var: parse("prior.beta_var", self.get("prior.beta_var"))?,
            tau_shape: parse("prior.tau_shape", self.get("prior.tau_shape"))?,
            tau_rate: parse("prior.tau_rate", self.get("prior.tau_rate"))?,
            nugget_shape: parse("prior.nugget_shape", self.get("prior.nugget_shape"))?,
            nugget_scale: parse("prior.nugget_scale", self.get("prior.nugget_scale"))?,
            phi_max: parse("prior.phi_max", self.get("prior.phi_max"))?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn rank(&self) -> Result<RankStrategy> {
        let p_o: Option<usize> = auto_or("rank.p_o", self.get("rank.p_o"))?;
        let p_p: Option<usize> = auto_or("rank.p_p", self.get("rank.p_p"))?;
        match (p_o, p_p) {
            (Some(p_o), Some(p_p)) => Ok(RankStrategy::Fixed { p_o, p_p }),
            (None, None) => Ok(RankStrategy::Grid {
                p_max: auto_or("rank.p_max", self.get("rank.p_max"))?,
                h: parse("rank.h", self.get("rank.h"))?,
            }),
            _ => Err(Error::Config("rank.p_o and rank.p_p must both be fixed or both auto".into())),
        }
    }

    /// Sampler settings; the chain seed is derived from `seed`.
    pub fn sampler(&self, seed: u64) -> Result<SamplerConfig> {
        let g = |k: &str| self.get(k);
        let c = SamplerConfig {
            iterations: parse("mcmc.iterations", g("mcmc.iterations"))?,
            burn_in: parse("mcmc.burn_in", g("mcmc.burn_in"))?,
            thin: parse("mcmc.thin", g("mcmc.thin"))?,
            seed: derive_seed(seed, 0x6d63_6d63),
            adapt_window: parse("mcmc.adapt_window", g("mcmc.adapt_window"))?,
            initial_scale_vector: parse("mcmc.initial_scale_vector", g("mcmc.initial_scale_vector"))?,
            initial_scale_scalar: parse("mcmc.initial_scale_scalar", g("mcmc.initial_scale_scalar"))?,
            target_vector: parse("mcmc.target_vector", g("mcmc.target_vector"))?,
            target_scalar: parse("mcmc.target_scalar", g("mcmc.target_scalar"))?,
            tau_warmup: auto_or("mcmc.tau_warmup", g("mcmc.tau_warmup"))?,
        };
        c.validate()?;
        Ok(c)
    }

    /// Options for one replicate whose seed is `seed`.
    pub fn replicate_options(&self, seed: u64) -> Result<ReplicateOptions> {
        let precision: PrecisionSpec = self.get("prior.precision").parse()?;
        Ok(ReplicateOptions {
            family: self.family()?,
            link: self.link()?,
            mesh: self.mesh()?,
            precision,
            rank: self.rank()?,
            priors: self.priors()?,
            sampler: self.sampler(seed)?,
            methods: self.methods()?,
            predict_draws: parse("mcmc.predict_draws", self.get("mcmc.predict_draws"))?,
            split_seed: parse("rank.split_seed", self.get("rank.split_seed"))?,
        })
    }

    pub fn report_grid(&self) -> Result<(usize, usize)> {
        Ok((
            parse("report.grid_nx", self.get("report.grid_nx"))?,
            parse("report.grid_ny", self.get("report.grid_ny"))?,
        ))
    }

    /// Parse every typed view once so configuration errors surface early.
    pub fn validate(&self) -> Result<()> {
        let seed = self.seed()?;
        self.replicate_options(seed)?;
        self.simulation()?;
        self.replicates()?;
        self.report_grid()?;
        Ok(())
    }
}
