//! Metropolis-within-Gibbs samplers for two-part spatial models under four
//! latent parameterizations, plus posterior prediction.
//!
//! Block order per iteration: `beta_o`, `beta_p`, `delta_o`, `delta_p`, then
//! `rho` (correlated prior), `phi_o`, `phi_p` (full-rank comparator), the
//! nugget (semi-continuous families), and finally `tau_o`, `tau_p`.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Projector};
use crate::likelihoods::{
    fixed_effects, predictive_mean, site_loglik, FamilyKind, LinkFunction, ModelParams, SiteObservation,
    TwoPartFamily,
};
use crate::linalg;
use crate::rank_selection::{fit_glm, GlmKind};
use crate::rng;
use crate::special::{gamma_logpdf, inv_gamma_logpdf};
use crate::spectral::{reduced_precision, MoranBasis, ReducedPrecision, SparseMatrix};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub beta_mean: f64,
    pub beta_var: f64,
    /// Gamma(shape, rate) on each precision, i.e. inverse-gamma on the variance.
    pub tau_shape: f64,
    pub tau_rate: f64,
    /// Inverse-gamma(shape, scale) on the nugget variance.
    pub nugget_shape: f64,
    pub nugget_scale: f64,
    /// Upper end of the uniform prior on the comparator's range parameters.
    pub phi_max: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_mean: 0.0,
            beta_var: 100.0,
            tau_shape: 0.002,
            tau_rate: 0.002,
            nugget_shape: 0.002,
            nugget_scale: 0.002,
            phi_max: std::f64::consts::SQRT_2,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_var > 0.0
            && self.tau_shape > 0.0
            && self.tau_rate > 0.0
            && self.nugget_shape > 0.0
            && self.nugget_scale > 0.0
            && self.phi_max > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("prior variances, shapes, rates and phi_max must be positive".into()))
        }
    }

    fn beta_logprior(&self, beta: &[f64]) -> f64 {
        let k = beta.len() as f64;
        -0.5 * beta.iter().map(|b| (b - self.beta_mean).powi(2)).sum::<f64>() / self.beta_var
            - 0.5 * k * (LN_2PI + self.beta_var.ln())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Total iterations including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Iterations between proposal-covariance refreshes during burn-in.
    pub adapt_window: usize,
    pub initial_scale_vector: f64,
    pub initial_scale_scalar: f64,
    pub target_vector: f64,
    pub target_scalar: f64,
    /// Iterations at the start of burn-in during which the precisions stay
    /// at their initial values; `None` means half of burn-in.
    pub tau_warmup: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 150_000,
            burn_in: 50_000,
            thin: 1,
            seed: 1,
            adapt_window: 100,
            initial_scale_vector: 0.05,
            initial_scale_scalar: 0.5,
            target_vector: 0.234,
            target_scalar: 0.44,
            tau_warmup: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::Config("thinning and adaptation window must be positive".into()));
        }
        if !(self.initial_scale_vector > 0.0 && self.initial_scale_scalar > 0.0) {
            return Err(Error::Config("proposal scales must be positive".into()));
        }
        let unit = |t: f64| t > 0.0 && t < 1.0;
        if !(unit(self.target_vector) && unit(self.target_scalar)) {
            return Err(Error::Config("target acceptance rates must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn tau_warmup(&self) -> usize {
        self.tau_warmup.unwrap_or(self.burn_in / 2).min(self.burn_in)
    }

    /// Number of stored draws.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Responses, covariates and per-site constants for one fit.
#[derive(Debug, Clone)]
pub struct FitData {
    pub family: TwoPartFamily,
    pub link: LinkFunction,
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    obs: Vec<SiteObservation>,
}

impl FitData {
    pub fn new(family: TwoPartFamily, link: LinkFunction, x: DMatrix<f64>, z: Vec<f64>) -> Result<Self> {
        if x.nrows() != z.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows, observations {}",
                x.nrows(),
                z.len()
            )));
        }
        let obs = z
            .iter()
            .map(|&v| SiteObservation::new(&family, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { family, link, x, z, obs })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Sum of site log-likelihoods given the two linear predictors, each
    /// passed as fixed plus spatial parts.
    pub fn loglik(&self, xb_o: &[f64], w_o: &[f64], xb_p: &[f64], w_p: &[f64], nugget: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.obs.len() {
            let (lp, l1) = self.link.log_probs(xb_o[i] + w_o[i]);
            s += site_loglik(&self.family, &self.obs[i], lp, l1, xb_p[i] + w_p[i], nugget);
        }
        s
    }
}

/// Maps basis coefficients to a spatial effect at the data sites.
#[derive(Debug, Clone)]
pub enum TermDesign {
    /// `A (M delta)`, never forming `A M`.
    Projected { projector: Projector, basis: MoranBasis },
    Dense(DMatrix<f64>),
}

impl TermDesign {
    pub fn projected(projector: Projector, basis: MoranBasis) -> Result<Self> {
        if projector.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "projector has {} columns but the basis was built on {} mesh vertices",
                projector.ncols(),
                basis.dim()
            )));
        }
        Ok(TermDesign::Projected { projector, basis })
    }

    pub fn nrows(&self) -> usize {
        match self {
            TermDesign::Projected { projector, .. } => projector.nrows(),
            TermDesign::Dense(m) => m.nrows(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            TermDesign::Projected { basis, .. } => basis.rank(),
            TermDesign::Dense(m) => m.ncols(),
        }
    }

    pub fn apply(&self, delta: &[f64]) -> Vec<f64> {
        match self {
            TermDesign::Projected { projector, basis } => projector.apply(&basis.expand(delta)),
            TermDesign::Dense(m) => {
                if m.ncols() == 0 {
                    vec![0.0; m.nrows()]
                } else {
                    linalg::mat_vec(m, delta)
                }
            }
        }
    }
}

/// A low-rank spatial effect with its Gaussian coefficient prior precision.
#[derive(Debug, Clone)]
pub struct SpatialTerm {
    pub design: TermDesign,
    pub precision: ReducedPrecision,
}

impl SpatialTerm {
    pub fn new(design: TermDesign, precision: ReducedPrecision) -> Result<Self> {
        if design.rank() != precision.dim() {
            return Err(Error::DimensionMismatch(format!(
                "design rank {} but prior precision is {}x{}",
                design.rank(),
                precision.dim(),
                precision.dim()
            )));
        }
        Ok(Self { design, precision })
    }

    pub fn rank(&self) -> usize {
        self.design.rank()
    }
}

/// Log-density of `N(0, (tau P)^-1)` at `delta`.
pub fn delta_logprior(delta: &[f64], tau: f64, precision: &ReducedPrecision) -> f64 {
    if !(tau > 0.0) {
        return f64::NEG_INFINITY;
    }
    let p = delta.len() as f64;
    0.5 * p * (tau.ln() - LN_2PI) + 0.5 * precision.log_det() - 0.5 * tau * precision.quad_form(delta)
}

/// Gibbs draw of a coefficient precision from its full conditional
/// `Gamma(shape + p/2, rate + quad/2)`, where `quad = delta' P delta`.
pub fn sample_precision<R: Rng + ?Sized>(p: usize, quad: f64, priors: &PriorSpec, rng: &mut R) -> f64 {
    let shape = priors.tau_shape + 0.5 * p as f64;
    let rate = priors.tau_rate + 0.5 * quad;
    Gamma::new(shape, 1.0 / rate)
        .map(|g| g.sample(rng))
        .unwrap_or(f64::NAN)
        .max(f64::MIN_POSITIVE)
}

/// Cached factors for the cross-correlated coefficient prior.
#[derive(Debug, Clone)]
pub struct CrossPrior {
    /// Lower Cholesky factor of `P_o^{-1}`.
    g_o: DMatrix<f64>,
    g_p: DMatrix<f64>,
    logdet_o: f64,
    logdet_p: f64,
}

fn covariance_factor(p: &ReducedPrecision) -> Result<DMatrix<f64>> {
    let n = p.dim();
    let l = p.cholesky();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        linalg::forward_solve(l, &mut e);
        linalg::backward_solve_transpose(l, &mut e);
        inv.column_mut(j).copy_from_slice(&e);
    }
    let sym = (&inv + inv.transpose()) * 0.5;
    linalg::cholesky(sym)
}

impl CrossPrior {
    pub fn new(p_o: &ReducedPrecision, p_p: &ReducedPrecision) -> Result<Self> {
        Ok(Self {
            g_o: covariance_factor(p_o)?,
            g_p: covariance_factor(p_p)?,
            logdet_o: p_o.log_det(),
            logdet_p: p_p.log_det(),
        })
    }

    /// Joint log-density of `(delta_o, delta_p)` where
    /// `delta_x = tau_x^{-1/2} G_x u_x` and `u` has unit variances with
    /// correlation `rho` between the paired leading coordinates.
    pub fn log_density(&self, d_o: &[f64], d_p: &[f64], tau_o: f64, tau_p: f64, rho: f64) -> f64 {
        if !(rho.abs() < 1.0) || !(tau_o > 0.0 && tau_p > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut u_o = d_o.to_vec();
        linalg::forward_solve(&self.g_o, &mut u_o);
        let mut u_p = d_p.to_vec();
        linalg::forward_solve(&self.g_p, &mut u_p);
        let (so, sp) = (tau_o.sqrt(), tau_p.sqrt());
        u_o.iter_mut().for_each(|v| *v *= so);
        u_p.iter_mut().for_each(|v| *v *= sp);
        let q = u_o.len().min(u_p.len());
        let one_m = 1.0 - rho * rho;
        let mut quad = 0.0;
        for i in 0..q {
            let (a, b) = (u_o[i], u_p[i]);
            quad += (a * a - 2.0 * rho * a * b + b * b) / one_m;
        }
        quad += u_o[q..].iter().map(|v| v * v).sum::<f64>();
        quad += u_p[q..].iter().map(|v| v * v).sum::<f64>();
        let (po, pp) = (d_o.len() as f64, d_p.len() as f64);
        -0.5 * (po + pp) * LN_2PI - 0.5 * q as f64 * one_m.ln() - 0.5 * quad
            + 0.5 * po * tau_o.ln()
            + 0.5 * self.logdet_o
            + 0.5 * pp * tau_p.ln()
            + 0.5 * self.logdet_p
    }
}

/// Joint log-density of the cross-correlated coefficient prior.
pub fn correlated_delta_logprior(
    d_o: &[f64],
    d_p: &[f64],
    tau_o: f64,
    tau_p: f64,
    rho: f64,
    p_o: &ReducedPrecision,
    p_p: &ReducedPrecision,
) -> f64 {
    if !(rho.abs() < 1.0) {
        return f64::NEG_INFINITY;
    }
    match CrossPrior::new(p_o, p_p) {
        Ok(c) => c.log_density(d_o, d_p, tau_o, tau_p, rho),
        Err(_) => f64::NAN,
    }
}

/// Full-rank comparator design: sites and their pairwise distances.
#[derive(Debug, Clone)]
pub struct GoldDesign {
    pub sites: Vec<Point2>,
    dist: DMatrix<f64>,
}

impl GoldDesign {
    pub fn new(sites: Vec<Point2>) -> Self {
        let n = sites.len();
        let dist = DMatrix::from_fn(n, n, |i, j| sites[i].dist(&sites[j]));
        Self { sites, dist }
    }

    /// Lower Cholesky factor of the exponential correlation `exp(-d / phi)`.
    pub fn factor(&self, phi: f64) -> Result<DMatrix<f64>> {
        let r = self.dist.map(|d| (-d / phi).exp());
        linalg::cholesky_with_jitter(&r, 1e-8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterizationKind {
    Picar,
    PicarCorrelated,
    FrkBisquare,
    GoldStandard,
}

impl ParameterizationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ParameterizationKind::Picar => "picar",
            ParameterizationKind::PicarCorrelated => "picar-correlated",
            ParameterizationKind::FrkBisquare => "frk-bisquare",
            ParameterizationKind::GoldStandard => "gold-standard",
        }
    }
}

impl std::str::FromStr for ParameterizationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "picar" | "picar-z" => Ok(Self::Picar),
            "picar-correlated" | "picar-cor" => Ok(Self::PicarCorrelated),
            "frk" | "frk-bisquare" | "bisquare" => Ok(Self::FrkBisquare),
            "gold" | "gold-standard" => Ok(Self::GoldStandard),
            other => Err(Error::Config(format!("unknown parameterization '{other}'"))),
        }
    }
}

impl std::fmt::Display for ParameterizationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub enum LatentParameterization {
    Picar {
        occurrence: SpatialTerm,
        prevalence: SpatialTerm,
    },
    PicarCorrelated {
        occurrence: SpatialTerm,
        prevalence: SpatialTerm,
        cross: CrossPrior,
    },
    FrkBisquare {
        occurrence: SpatialTerm,
        prevalence: SpatialTerm,
    },
    GoldStandard(GoldDesign),
}

impl LatentParameterization {
    /// Projected Moran bases of ranks `p_o`, `p_p` taken as leading subsets
    /// of one basis pool, with prior precisions `M' Q M`.
    pub fn picar(
        projector: &Projector,
        pool: &MoranBasis,
        q: &SparseMatrix,
        p_o: usize,
        p_p: usize,
        correlated: bool,
    ) -> Result<Self> {
        let term = |p: usize| -> Result<SpatialTerm> {
            let basis = pool.leading(p)?;
            let prec = reduced_precision(&basis, q)?;
            SpatialTerm::new(TermDesign::projected(projector.clone(), basis)?, prec)
        };
        let occurrence = term(p_o)?;
        let prevalence = term(p_p)?;
        if correlated {
            let cross = CrossPrior::new(&occurrence.precision, &prevalence.precision)?;
            Ok(Self::PicarCorrelated {
                occurrence,
                prevalence,
                cross,
            })
        } else {
            Ok(Self::Picar { occurrence, prevalence })
        }
    }

    /// Bisquare design shared by both processes, identity coefficient prior.
    pub fn frk(phi: DMatrix<f64>) -> Result<Self> {
        let r = phi.ncols();
        let term = SpatialTerm::new(TermDesign::Dense(phi), ReducedPrecision::identity(r))?;
        Ok(Self::FrkBisquare {
            occurrence: term.clone(),
            prevalence: term,
        })
    }

    pub fn gold(sites: Vec<Point2>) -> Self {
        Self::GoldStandard(GoldDesign::new(sites))
    }

    pub fn kind(&self) -> ParameterizationKind {
        match self {
            Self::Picar { .. } => ParameterizationKind::Picar,
            Self::PicarCorrelated { .. } => ParameterizationKind::PicarCorrelated,
            Self::FrkBisquare { .. } => ParameterizationKind::FrkBisquare,
            Self::GoldStandard(_) => ParameterizationKind::GoldStandard,
        }
    }

    fn terms(&self) -> Option<(&SpatialTerm, &SpatialTerm)> {
        match self {
            Self::Picar { occurrence, prevalence }
            | Self::PicarCorrelated {
                occurrence, prevalence, ..
            }
            | Self::FrkBisquare { occurrence, prevalence } => Some((occurrence, prevalence)),
            Self::GoldStandard(_) => None,
        }
    }

    /// Coefficient dimensions `(p_o, p_p)`.
    pub fn ranks(&self) -> (usize, usize) {
        match self {
            Self::GoldStandard(g) => (g.sites.len(), g.sites.len()),
            _ => {
                let (o, p) = self.terms().expect("low-rank");
                (o.rank(), p.rank())
            }
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Self::GoldStandard(g) => g.sites.len(),
            _ => self.terms().expect("low-rank").0.design.nrows(),
        }
    }
}

/// Column layout of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainLayout {
    pub k_o: usize,
    pub k_p: usize,
    pub p_o: usize,
    pub p_p: usize,
    pub rho: bool,
    pub nugget: bool,
    pub phi: bool,
}

impl ChainLayout {
    pub fn width(&self) -> usize {
        self.k_o + self.k_p + self.p_o + self.p_p + 2 + self.rho as usize + self.nugget as usize + 2 * self.phi as usize
    }

    pub fn names(&self) -> Vec<String> {
        let coef = if self.phi { "gamma" } else { "delta" };
        let mut v = Vec::with_capacity(self.width());
        v.extend((1..=self.k_o).map(|j| format!("beta_o_{j}")));
        v.extend((1..=self.k_p).map(|j| format!("beta_p_{j}")));
        v.extend((1..=self.p_o).map(|j| format!("{coef}_o_{j}")));
        v.extend((1..=self.p_p).map(|j| format!("{coef}_p_{j}")));
        v.push("tau_o".into());
        v.push("tau_p".into());
        if self.rho {
            v.push("rho".into());
        }
        if self.nugget {
            v.push("nugget".into());
        }
        if self.phi {
            v.push("phi_o".into());
            v.push("phi_p".into());
        }
        v
    }

    pub fn from_names(names: &[String]) -> Result<Self> {
        let count = |prefix: &str| names.iter().filter(|n| n.starts_with(prefix)).count();
        let phi = names.iter().any(|n| n == "phi_o");
        let coef = if phi { "gamma" } else { "delta" };
        let layout = Self {
            k_o: count("beta_o_"),
            k_p: count("beta_p_"),
            p_o: count(&format!("{coef}_o_")),
            p_p: count(&format!("{coef}_p_")),
            rho: names.iter().any(|n| n == "rho"),
            nugget: names.iter().any(|n| n == "nugget"),
            phi,
        };
        if layout.names() != names {
            return Err(Error::parse("chain header", "unrecognized column layout"));
        }
        Ok(layout)
    }

    pub fn pack(&self, p: &ModelParams) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width());
        v.extend_from_slice(&p.beta_o);
        v.extend_from_slice(&p.beta_p);
        v.extend_from_slice(&p.delta_o);
        v.extend_from_slice(&p.delta_p);
        v.push(p.tau_o);
        v.push(p.tau_p);
        if self.rho {
            v.push(p.rho.unwrap_or(0.0));
        }
        if self.nugget {
            v.push(p.nugget.unwrap_or(f64::NAN));
        }
        if self.phi {
            let [a, b] = p.phi.unwrap_or([f64::NAN; 2]);
            v.push(a);
            v.push(b);
        }
        v
    }

    pub fn unpack(&self, row: &[f64]) -> ModelParams {
        let mut at = 0;
        let mut take = |n: usize| {
            let s = row[at..at + n].to_vec();
            at += n;
            s
        };
        let beta_o = take(self.k_o);
        let beta_p = take(self.k_p);
        let delta_o = take(self.p_o);
        let delta_p = take(self.p_p);
        let tau = take(2);
        let rho = self.rho.then(|| take(1)[0]);
        let nugget = self.nugget.then(|| take(1)[0]);
        let phi = self.phi.then(|| {
            let v = take(2);
            [v[0], v[1]]
        });
        ModelParams {
            beta_o,
            beta_p,
            delta_o,
            delta_p,
            tau_o: tau[0],
            tau_p: tau[1],
            rho,
            nugget,
            phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub name: String,
    /// Acceptance rate after burn-in (NaN for Gibbs blocks or no draws).
    pub acceptance: f64,
    /// Acceptance rate during burn-in.
    pub burn_in_acceptance: f64,
    /// Final proposal scale multiplier.
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationRecord {
    pub iteration: usize,
    pub block: usize,
    pub scale: f64,
    pub window_acceptance: f64,
}

/// Stored posterior draws with sampler bookkeeping.
#[derive(Debug, Clone)]
pub struct Chain {
    pub kind: ParameterizationKind,
    pub layout: ChainLayout,
    pub names: Vec<String>,
    draws: Vec<f64>,
    pub blocks: Vec<BlockStats>,
    pub adaptation: Vec<AdaptationRecord>,
    pub seconds: f64,
    pub seed: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Every proposal scale after burn-in equals its value at the end of
    /// burn-in.
    pub adaptation_frozen: bool,
    pub initial: ModelParams,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len() / self.layout.width()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.draws[i * w..(i + 1) * w]
    }

    pub fn params(&self, i: usize) -> ModelParams {
        self.layout.unpack(self.row(i))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some((0..self.len()).map(|i| self.row(i)[j]).collect())
    }

    pub fn column_at(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.row(i)[j]).collect()
    }

    pub fn posterior_mean(&self) -> ModelParams {
        let w = self.width();
        let mut m = vec![0.0; w];
        for i in 0..self.len() {
            m.iter_mut().zip(self.row(i)).for_each(|(a, b)| *a += b);
        }
        let n = self.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        self.layout.unpack(&m)
    }

    /// Build a chain from raw rows, e.g. when reading persisted draws.
    pub fn from_draws(kind: ParameterizationKind, layout: ChainLayout, draws: Vec<f64>) -> Result<Self> {
        if draws.len() % layout.width() != 0 {
            return Err(Error::DimensionMismatch("draw buffer is not a whole number of rows".into()));
        }
        let n = draws.len() / layout.width();
        let initial = if n > 0 {
            layout.unpack(&draws[..layout.width()])
        } else {
            layout.unpack(&vec![0.0; layout.width()])
        };
        Ok(Self {
            kind,
            layout,
            names: layout.names(),
            draws,
            blocks: Vec::new(),
            adaptation: Vec::new(),
            seconds: f64::NAN,
            seed: 0,
            iterations: n,
            burn_in: 0,
            thin: 1,
            adaptation_frozen: true,
            initial,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(&self.names).map_err(io)?;
        for i in 0..self.len() {
            w.write_record(self.row(i).iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path, kind: ParameterizationKind) -> Result<Self> {
        let io = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
        let mut r = csv::Reader::from_path(path).map_err(io)?;
        let names: Vec<String> = r.headers().map_err(io)?.iter().map(|s| s.to_string()).collect();
        let layout = ChainLayout::from_names(&names)?;
        let mut draws = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            for f in rec.iter() {
                draws.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::parse(path.display().to_string(), format!("'{f}' is not a number")))?,
                );
            }
        }
        Self::from_draws(kind, layout, draws)
    }
}

/// Robbins-Monro adaptive random-walk proposal. Vector blocks may switch to
/// a scaled empirical covariance once enough burn-in draws are available.
#[derive(Debug, Clone)]
struct Adaptive {
    name: String,
    dim: usize,
    target: f64,
    log_scale: f64,
    base: f64,
    empirical: bool,
    shape: Option<DMatrix<f64>>,
    count: usize,
    mean: Vec<f64>,
    m2: DMatrix<f64>,
    steps: u64,
    window_acc: f64,
    window_prop: u64,
    burn_acc: u64,
    burn_prop: u64,
    acc: u64,
    prop: u64,
    frozen: bool,
}

impl Adaptive {
    fn new(name: &str, dim: usize, target: f64, base: f64, empirical: bool) -> Self {
        Self {
            name: name.to_string(),
            dim,
            target,
            log_scale: 0.0,
            base,
            empirical,
            shape: None,
            count: 0,
            mean: if empirical { vec![0.0; dim] } else { Vec::new() },
            m2: if empirical { DMatrix::zeros(dim, dim) } else { DMatrix::zeros(0, 0) },
            steps: 0,
            window_acc: 0.0,
            window_prop: 0,
            burn_acc: 0,
            burn_prop: 0,
            acc: 0,
            prop: 0,
            frozen: false,
        }
    }

    fn scale(&self) -> f64 {
        self.base * self.log_scale.exp()
    }

    fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
        let step = match &self.shape {
            Some(l) => linalg::lower_mul_vec(l, &z),
            None => z,
        };
        let s = self.scale();
        x.iter().zip(&step).map(|(a, b)| a + s * b).collect()
    }

    fn propose_scalar<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        x + self.scale() * z
    }

    fn record(&mut self, log_alpha: f64, accepted: bool, adapting: bool) {
        if adapting {
            let a = if log_alpha.is_nan() { 0.0 } else { log_alpha.min(0.0).exp() };
            self.steps += 1;
            let gain = (1.0 + self.steps as f64 / 20.0).powf(-0.6);
            self.log_scale = (self.log_scale + gain * (a - self.target)).clamp(-30.0, 30.0);
            self.window_acc += a;
            self.window_prop += 1;
            self.burn_prop += 1;
            self.burn_acc += accepted as u64;
        } else {
            self.prop += 1;
            self.acc += accepted as u64;
        }
    }

    fn observe(&mut self, x: &[f64]) {
        if !self.empirical || self.frozen {
            return;
        }
        self.count += 1;
        let c = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / c;
        }
        let post: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for j in 0..self.dim {
            let dj = delta[j];
            for i in j..self.dim {
                self.m2[(i, j)] += post[i] * dj;
            }
        }
    }

    fn restart_history(&mut self) {
        if self.empirical {
            self.count = 0;
            self.mean.iter_mut().for_each(|v| *v = 0.0);
            self.m2.fill(0.0);
        }
    }

    /// End of an adaptation window: returns the mean acceptance in it.
    fn end_window(&mut self) -> f64 {
        let rate = if self.window_prop > 0 {
            self.window_acc / self.window_prop as f64
        } else {
            f64::NAN
        };
        self.window_acc = 0.0;
        self.window_prop = 0;
        if self.empirical && self.count >= (2 * self.dim + 10).max(100) {
            let d = self.dim as f64;
            let f = 2.38 * 2.38 / d / (self.count - 1) as f64;
            let mut cov = DMatrix::from_fn(self.dim, self.dim, |i, j| {
                let v = if i >= j { self.m2[(i, j)] } else { self.m2[(j, i)] };
                v * f
            });
            let avg_diag = (0..self.dim).map(|i| cov[(i, i)]).sum::<f64>() / d;
            for i in 0..self.dim {
                cov[(i, i)] += 1e-6 * avg_diag.max(1e-12);
            }
            if let Ok(l) = linalg::cholesky(cov) {
                if self.shape.is_none() {
                    self.log_scale = 0.0;
                    self.base = 1.0;
                }
                self.shape = Some(l);
            }
        }
        rate
    }

    fn stats(&self) -> BlockStats {
        let rate = |a: u64, p: u64| if p > 0 { a as f64 / p as f64 } else { f64::NAN };
        BlockStats {
            name: self.name.clone(),
            acceptance: rate(self.acc, self.prop),
            burn_in_acceptance: rate(self.burn_acc, self.burn_prop),
            scale: self.scale(),
        }
    }

    fn fingerprint(&self) -> (f64, f64) {
        let s = self.shape.as_ref().map(|l| l.sum()).unwrap_or(0.0);
        (self.scale(), s)
    }
}

/// Metropolis accept step.
fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    if log_alpha.is_nan() {
        return false;
    }
    log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha
}

/// Starting values: GLM fits without spatial terms, zero coefficients, unit
/// precisions, zero correlation, and the sample variance of the (log)
/// positive responses as the nugget.
pub fn initial_params(data: &FitData, latent: &LatentParameterization, priors: &PriorSpec) -> ModelParams {
    let k = data.k();
    let occ: Vec<f64> = data.z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
    let beta_o = if k > 0 {
        fit_glm(GlmKind::Logistic, &data.x, &occ)
            .map(|f| f.coefficients)
            .unwrap_or_else(|_| vec![0.0; k])
    } else {
        Vec::new()
    };
    let pos: Vec<usize> = (0..data.n()).filter(|&i| data.z[i] > 0.0).collect();
    let xp = data.x.select_rows(pos.iter());
    let yp: Vec<f64> = pos.iter().map(|&i| data.z[i]).collect();
    let beta_p = if k > 0 && !pos.is_empty() {
        fit_glm(GlmKind::for_prevalence(&data.family), &xp, &yp)
            .map(|f| f.coefficients)
            .unwrap_or_else(|_| vec![0.0; k])
    } else {
        vec![0.0; k]
    };
    let nugget = data.family.is_semicontinuous().then(|| {
        let vals: Vec<f64> = match data.family.kind {
            FamilyKind::HurdleLognormal => yp.iter().map(|v| v.ln()).collect(),
            _ => yp.clone(),
        };
        if vals.len() < 2 {
            1.0
        } else {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            v.max(1e-3)
        }
    });
    let (p_o, p_p) = latent.ranks();
    let kind = latent.kind();
    ModelParams {
        beta_o,
        beta_p,
        delta_o: vec![0.0; p_o],
        delta_p: vec![0.0; p_p],
        tau_o: 1.0,
        tau_p: 1.0,
        rho: (kind == ParameterizationKind::PicarCorrelated).then_some(0.0),
        nugget,
        phi: (kind == ParameterizationKind::GoldStandard).then_some([priors.phi_max / 4.0; 2]),
    }
}

fn layout_for(data: &FitData, latent: &LatentParameterization) -> ChainLayout {
    let (p_o, p_p) = latent.ranks();
    let kind = latent.kind();
    ChainLayout {
        k_o: data.k(),
        k_p: data.k(),
        p_o,
        p_p,
        rho: kind == ParameterizationKind::PicarCorrelated,
        nugget: data.family.is_semicontinuous(),
        phi: kind == ParameterizationKind::GoldStandard,
    }
}

fn check_params(data: &FitData, latent: &LatentParameterization, p: &ModelParams) -> Result<()> {
    let layout = layout_for(data, latent);
    let bad = |what: &str, got: usize, want: usize| {
        Err(Error::DimensionMismatch(format!("{what} has {got} entries, expected {want}")))
    };
    if p.beta_o.len() != layout.k_o {
        return bad("beta_o", p.beta_o.len(), layout.k_o);
    }
    if p.beta_p.len() != layout.k_p {
        return bad("beta_p", p.beta_p.len(), layout.k_p);
    }
    if p.delta_o.len() != layout.p_o {
        return bad("delta_o", p.delta_o.len(), layout.p_o);
    }
    if p.delta_p.len() != layout.p_p {
        return bad("delta_p", p.delta_p.len(), layout.p_p);
    }
    if layout.rho != p.rho.is_some() || layout.nugget != p.nugget.is_some() || layout.phi != p.phi.is_some() {
        return Err(Error::InvalidInitialization(
            "optional parameters do not match the model (rho, nugget, phi)".into(),
        ));
    }
    Ok(())
}

/// Spatial effects at the data sites for given coefficients.
fn spatial_effects(latent: &LatentParameterization, p: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    match latent {
        LatentParameterization::GoldStandard(g) => {
            let [a, b] = p.phi.expect("checked");
            let lo = g.factor(a)?;
            let lp = g.factor(b)?;
            Ok((linalg::lower_mul_vec(&lo, &p.delta_o), linalg::lower_mul_vec(&lp, &p.delta_p)))
        }
        _ => {
            let (o, pp) = latent.terms().expect("low-rank");
            Ok((o.design.apply(&p.delta_o), pp.design.apply(&p.delta_p)))
        }
    }
}

fn coefficient_logprior(latent: &LatentParameterization, p: &ModelParams) -> f64 {
    match latent {
        LatentParameterization::Picar { occurrence, prevalence }
        | LatentParameterization::FrkBisquare { occurrence, prevalence } => {
            delta_logprior(&p.delta_o, p.tau_o, &occurrence.precision)
                + delta_logprior(&p.delta_p, p.tau_p, &prevalence.precision)
        }
        LatentParameterization::PicarCorrelated { cross, .. } => {
            cross.log_density(&p.delta_o, &p.delta_p, p.tau_o, p.tau_p, p.rho.unwrap_or(0.0))
        }
        LatentParameterization::GoldStandard(_) => {
            let iid = |g: &[f64], tau: f64| {
                if !(tau > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let n = g.len() as f64;
                0.5 * n * (tau.ln() - LN_2PI) - 0.5 * tau * g.iter().map(|v| v * v).sum::<f64>()
            };
            iid(&p.delta_o, p.tau_o) + iid(&p.delta_p, p.tau_p)
        }
    }
}

/// Unnormalized log posterior density (likelihood plus all priors); `-inf`
/// outside the support.
pub fn log_posterior(
    params: &ModelParams,
    data: &FitData,
    latent: &LatentParameterization,
    priors: &PriorSpec,
) -> f64 {
    if check_params(data, latent, params).is_err() || params.validate().is_err() {
        return f64::NEG_INFINITY;
    }
    if let Some([a, b]) = params.phi {
        if a > priors.phi_max || b > priors.phi_max {
            return f64::NEG_INFINITY;
        }
    }
    let Ok((w_o, w_p)) = spatial_effects(latent, params) else {
        return f64::NAN;
    };
    let Ok(xb_o) = fixed_effects(&data.x, &params.beta_o) else {
        return f64::NAN;
    };
    let Ok(xb_p) = fixed_effects(&data.x, &params.beta_p) else {
        return f64::NAN;
    };
    let nugget = params.nugget.unwrap_or(1.0);
    let mut lp = data.loglik(&xb_o, &w_o, &xb_p, &w_p, nugget);
    lp += priors.beta_logprior(&params.beta_o) + priors.beta_logprior(&params.beta_p);
    lp += coefficient_logprior(latent, params);
    lp += gamma_logpdf(params.tau_o, priors.tau_shape, priors.tau_rate);
    lp += gamma_logpdf(params.tau_p, priors.tau_shape, priors.tau_rate);
    if params.rho.is_some() {
        lp += -std::f64::consts::LN_2;
    }
    if let Some(v) = params.nugget {
        lp += inv_gamma_logpdf(v, priors.nugget_shape, priors.nugget_scale);
    }
    if params.phi.is_some() {
        lp += -2.0 * priors.phi_max.ln();
    }
    lp
}

struct State {
    p: ModelParams,
    xb_o: Vec<f64>,
    xb_p: Vec<f64>,
    w_o: Vec<f64>,
    w_p: Vec<f64>,
    ll: f64,
    chol_o: Option<DMatrix<f64>>,
    chol_p: Option<DMatrix<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Proc {
    O,
    P,
}

struct Sampler<'a> {
    data: &'a FitData,
    latent: &'a LatentParameterization,
    priors: &'a PriorSpec,
    st: State,
    rng: ChaCha8Rng,
    blocks: Vec<Adaptive>,
    idx: BlockIndex,
}

#[derive(Default)]
struct BlockIndex {
    beta_o: usize,
    beta_p: usize,
    delta_o: Option<usize>,
    delta_p: Option<usize>,
    rho: Option<usize>,
    phi_o: Option<usize>,
    phi_p: Option<usize>,
    nugget: Option<usize>,
    tau_o: Option<usize>,
    tau_p: Option<usize>,
}

impl<'a> Sampler<'a> {
    fn nugget(&self) -> f64 {
        self.st.p.nugget.unwrap_or(1.0)
    }

    /// Log prior of the coefficient blocks that depends on `which`
    /// coefficients (for the correlated prior, the joint density).
    fn coef_prior(&self, which: Proc, d: &[f64], tau: f64, rho: f64) -> f64 {
        let p = &self.st.p;
        match self.latent {
            LatentParameterization::Picar { occurrence, prevalence }
            | LatentParameterization::FrkBisquare { occurrence, prevalence } => {
                let term = if which == Proc::O { occurrence } else { prevalence };
                -0.5 * tau * term.precision.quad_form(d) + 0.5 * d.len() as f64 * tau.ln()
            }
            LatentParameterization::PicarCorrelated { cross, .. } => {
                let (d_o, d_p, t_o, t_p) = match which {
                    Proc::O => (d, &p.delta_p[..], tau, p.tau_p),
                    Proc::P => (&p.delta_o[..], d, p.tau_o, tau),
                };
                cross.log_density(d_o, d_p, t_o, t_p, rho)
            }
            LatentParameterization::GoldStandard(_) => {
                -0.5 * tau * d.iter().map(|v| v * v).sum::<f64>() + 0.5 * d.len() as f64 * tau.ln()
            }
        }
    }

    fn apply_term(&self, which: Proc, d: &[f64]) -> Vec<f64> {
        match self.latent {
            LatentParameterization::GoldStandard(_) => {
                let l = if which == Proc::O { &self.st.chol_o } else { &self.st.chol_p };
                linalg::lower_mul_vec(l.as_ref().expect("gold factor"), d)
            }
            _ => {
                let (o, p) = self.latent.terms().expect("low-rank");
                if which == Proc::O {
                    o.design.apply(d)
                } else {
                    p.design.apply(d)
                }
            }
        }
    }

    fn step_beta(&mut self, which: Proc, adapting: bool) {
        let bi = if which == Proc::O { self.idx.beta_o } else { self.idx.beta_p };
        if self.blocks[bi].dim == 0 {
            return;
        }
        let cur = if which == Proc::O { &self.st.p.beta_o } else { &self.st.p.beta_p };
        let prop = self.blocks[bi].propose(cur, &mut self.rng);
        let xb = linalg::mat_vec(&self.data.x, &prop);
        let st = &self.st;
        let ll = match which {
            Proc::O => self.data.loglik(&xb, &st.w_o, &st.xb_p, &st.w_p, self.nugget()),
            Proc::P => self.data.loglik(&st.xb_o, &st.w_o, &xb, &st.w_p, self.nugget()),
        };
        let log_alpha = ll - st.ll + self.priors.beta_logprior(&prop) - self.priors.beta_logprior(cur);
        let ok = accept(log_alpha, &mut self.rng);
        if ok {
            self.st.ll = ll;
            match which {
                Proc::O => {
                    self.st.p.beta_o = prop;
                    self.st.xb_o = xb;
                }
                Proc::P => {
                    self.st.p.beta_p = prop;
                    self.st.xb_p = xb;
                }
            }
        }
        self.blocks[bi].record(log_alpha, ok, adapting);
        if adapting {
            let cur = if which == Proc::O { &self.st.p.beta_o } else { &self.st.p.beta_p };
            let cur = cur.clone();
            self.blocks[bi].observe(&cur);
        }
    }

    fn step_delta(&mut self, which: Proc, adapting: bool) {
        let Some(bi) = (if which == Proc::O { self.idx.delta_o } else { self.idx.delta_p }) else {
            return;
        };
        let (cur, tau) = match which {
            Proc::O => (&self.st.p.delta_o, self.st.p.tau_o),
            Proc::P => (&self.st.p.delta_p, self.st.p.tau_p),
        };
        let rho = self.st.p.rho.unwrap_or(0.0);
        let prop = self.blocks[bi].propose(cur, &mut self.rng);
        let prior_new = self.coef_prior(which, &prop, tau, rho);
        let prior_old = self.coef_prior(which, cur, tau, rho);
        let w = self.apply_term(which, &prop);
        let st = &self.st;
        let ll = match which {
            Proc::O => self.data.loglik(&st.xb_o, &w, &st.xb_p, &st.w_p, self.nugget()),
            Proc::P => self.data.loglik(&st.xb_o, &st.w_o, &st.xb_p, &w, self.nugget()),
        };
        let log_alpha = ll - st.ll + prior_new - prior_old;
        let ok = accept(log_alpha, &mut self.rng);
        if ok {
            self.st.ll = ll;
            match which {
                Proc::O => {
                    self.st.p.delta_o = prop;
                    self.st.w_o = w;
                }
                Proc::P => {
                    self.st.p.delta_p = prop;
                    self.st.w_p = w;
                }
            }
        }
        self.blocks[bi].record(log_alpha, ok, adapting);
        if adapting {
            let cur = if which == Proc::O { &self.st.p.delta_o } else { &self.st.p.delta_p }.clone();
            self.blocks[bi].observe(&cur);
        }
    }

    fn step_rho(&mut self, adapting: bool) {
        let Some(bi) = self.idx.rho else { return };
        let LatentParameterization::PicarCorrelated { cross, .. } = self.latent else {
            return;
        };
        let p = &self.st.p;
        let rho = p.rho.unwrap_or(0.0);
        let prop = self.blocks[bi].propose_scalar(rho, &mut self.rng);
        let log_alpha = if prop.abs() >= 1.0 {
            f64::NEG_INFINITY
        } else {
            cross.log_density(&p.delta_o, &p.delta_p, p.tau_o, p.tau_p, prop)
                - cross.log_density(&p.delta_o, &p.delta_p, p.tau_o, p.tau_p, rho)
        };
        let ok = accept(log_alpha, &mut self.rng);
        if ok {
            self.st.p.rho = Some(prop);
        }
        self.blocks[bi].record(log_alpha, ok, adapting);
    }

    fn step_phi(&mut self, which: Proc, adapting: bool) -> Result<()> {
        let Some(bi) = (if which == Proc::O { self.idx.phi_o } else { self.idx.phi_p }) else {
            return Ok(());
        };
        let LatentParameterization::GoldStandard(g) = self.latent else {
            return Ok(());
        };
        let [a, b] = self.st.p.phi.expect("gold has ranges");
        let cur = if which == Proc::O { a } else { b };
        let prop = self.blocks[bi].propose_scalar(cur, &mut self.rng);
        let mut log_alpha = f64::NEG_INFINITY;
        let mut accepted_factor = None;
        if prop > 0.0 && prop <= self.priors.phi_max {
            // A fresh factorization for every proposal.
            let l = g.factor(prop)?;
            let gamma = if which == Proc::O { &self.st.p.delta_o } else { &self.st.p.delta_p };
            let w = linalg::lower_mul_vec(&l, gamma);
            let st = &self.st;
            let ll = match which {
                Proc::O => self.data.loglik(&st.xb_o, &w, &st.xb_p, &st.w_p, self.nugget()),
                Proc::P => self.data.loglik(&st.xb_o, &st.w_o, &st.xb_p, &w, self.nugget()),
            };
            log_alpha = ll - st.ll;
            accepted_factor = Some((l, w, ll));
        }
        let ok = accept(log_alpha, &mut self.rng);
        if ok {
            let (l, w, ll) = accepted_factor.expect("finite proposal");
            self.st.ll = ll;
            match which {
                Proc::O => {
                    self.st.p.phi = Some([prop, b]);
                    self.st.chol_o = Some(l);
                    self.st.w_o = w;
                }
                Proc::P => {
                    self.st.p.phi = Some([a, prop]);
                    self.st.chol_p = Some(l);
                    self.st.w_p = w;
                }
            }
        }
        self.blocks[bi].record(log_alpha, ok, adapting);
        Ok(())
    }

    fn step_nugget(&mut self, adapting: bool) {
        let Some(bi) = self.idx.nugget else { return };
        let cur = self.nugget();
        let log_prop = self.blocks[bi].propose_scalar(cur.ln(), &mut self.rng);
        let prop = log_prop.exp();
        let st = &self.st;
        let ll = self.data.loglik(&st.xb_o, &st.w_o, &st.xb_p, &st.w_p, prop);
        let pr = |v: f64| inv_gamma_logpdf(v, self.priors.nugget_shape, self.priors.nugget_scale) + v.ln();
        let log_alpha = ll - st.ll + pr(prop) - pr(cur);
        let ok = prop > 0.0 && prop.is_finite() && accept(log_alpha, &mut self.rng);
        if ok {
            self.st.ll = ll;
            self.st.p.nugget = Some(prop);
        }
        self.blocks[bi].record(log_alpha, ok, adapting);
    }

    fn quad(&self, which: Proc) -> f64 {
        let d = if which == Proc::O { &self.st.p.delta_o } else { &self.st.p.delta_p };
        match self.latent {
            LatentParameterization::Picar { occurrence, prevalence }
            | LatentParameterization::FrkBisquare { occurrence, prevalence } => {
                let t = if which == Proc::O { occurrence } else { prevalence };
                t.precision.quad_form(d)
            }
            _ => d.iter().map(|v| v * v).sum(),
        }
    }

    fn step_tau(&mut self, which: Proc, adapting: bool) {
        let d_len = if which == Proc::O { self.st.p.delta_o.len() } else { self.st.p.delta_p.len() };
        if d_len == 0 {
            return;
        }
        if let Some(bi) = if which == Proc::O { self.idx.tau_o } else { self.idx.tau_p } {
            // Correlated prior: random walk on log tau.
            let LatentParameterization::PicarCorrelated { cross, .. } = self.latent else {
                return;
            };
            let p = &self.st.p;
            let cur = if which == Proc::O { p.tau_o } else { p.tau_p };
            let prop = self.blocks[bi].propose_scalar(cur.ln(), &mut self.rng).exp();
            let rho = p.rho.unwrap_or(0.0);
            let dens = |t: f64| {
                let (to, tp) = if which == Proc::O { (t, p.tau_p) } else { (p.tau_o, t) };
                cross.log_density(&p.delta_o, &p.delta_p, to, tp, rho)
                    + gamma_logpdf(t, self.priors.tau_shape, self.priors.tau_rate)
                    + t.ln()
            };
            let log_alpha = dens(prop) - dens(cur);
            let ok = prop > 0.0 && prop.is_finite() && accept(log_alpha, &mut self.rng);
            if ok {
                match which {
                    Proc::O => self.st.p.tau_o = prop,
                    Proc::P => self.st.p.tau_p = prop,
                }
            }
            self.blocks[bi].record(log_alpha, ok, adapting);
            return;
        }
        let draw = sample_precision(d_len, self.quad(which), self.priors, &mut self.rng);
        match which {
            Proc::O => self.st.p.tau_o = draw,
            Proc::P => self.st.p.tau_p = draw,
        }
    }
}

/// Run the sampler. `init` defaults to [`initial_params`].
pub fn fit(
    data: &FitData,
    latent: &LatentParameterization,
    priors: &PriorSpec,
    config: &SamplerConfig,
    init: Option<&ModelParams>,
) -> Result<Chain> {
    config.validate()?;
    priors.validate()?;
    if latent.nrows() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "latent design has {} rows but there are {} observations",
            latent.nrows(),
            data.n()
        )));
    }
    let start = Instant::now();
    let p0 = match init {
        Some(p) => p.clone(),
        None => initial_params(data, latent, priors),
    };
    check_params(data, latent, &p0)?;
    let lp0 = log_posterior(&p0, data, latent, priors);
    if !lp0.is_finite() {
        return Err(Error::InvalidInitialization(format!("log posterior is {lp0} at the starting values")));
    }
    let (chol_o, chol_p) = match (latent, p0.phi) {
        (LatentParameterization::GoldStandard(g), Some([a, b])) => (Some(g.factor(a)?), Some(g.factor(b)?)),
        _ => (None, None),
    };
    let (w_o, w_p) = spatial_effects(latent, &p0)?;
    let xb_o = fixed_effects(&data.x, &p0.beta_o)?;
    let xb_p = fixed_effects(&data.x, &p0.beta_p)?;
    let ll = data.loglik(&xb_o, &w_o, &xb_p, &w_p, p0.nugget.unwrap_or(1.0));

    let kind = latent.kind();
    let gold = kind == ParameterizationKind::GoldStandard;
    let mut blocks = Vec::new();
    let mut add = |b: Adaptive| {
        blocks.push(b);
        blocks.len() - 1
    };
    let (tv, ts) = (config.target_vector, config.target_scalar);
    let (sv, ss) = (config.initial_scale_vector, config.initial_scale_scalar);
    let mut idx = BlockIndex {
        beta_o: add(Adaptive::new("beta_o", data.k(), tv, sv, true)),
        beta_p: add(Adaptive::new("beta_p", data.k(), tv, sv, true)),
        ..BlockIndex::default()
    };
    let coef = if gold { "gamma" } else { "delta" };
    if !p0.delta_o.is_empty() {
        idx.delta_o = Some(add(Adaptive::new(&format!("{coef}_o"), p0.delta_o.len(), tv, sv, !gold)));
    }
    if !p0.delta_p.is_empty() {
        idx.delta_p = Some(add(Adaptive::new(&format!("{coef}_p"), p0.delta_p.len(), tv, sv, !gold)));
    }
    if kind == ParameterizationKind::PicarCorrelated {
        idx.rho = Some(add(Adaptive::new("rho", 1, ts, 0.1, false)));
    }
    if gold {
        idx.phi_o = Some(add(Adaptive::new("phi_o", 1, ts, 0.05, false)));
        idx.phi_p = Some(add(Adaptive::new("phi_p", 1, ts, 0.05, false)));
    }
    if data.family.is_semicontinuous() {
        idx.nugget = Some(add(Adaptive::new("nugget", 1, ts, ss, false)));
    }
    if kind == ParameterizationKind::PicarCorrelated {
        idx.tau_o = Some(add(Adaptive::new("tau_o", 1, ts, ss, false)));
        idx.tau_p = Some(add(Adaptive::new("tau_p", 1, ts, ss, false)));
    }

    let mut s = Sampler {
        data,
        latent,
        priors,
        st: State {
            p: p0.clone(),
            xb_o,
            xb_p,
            w_o,
            w_p,
            ll,
            chol_o,
            chol_p,
        },
        rng: rng::stream(config.seed, 0),
        blocks,
        idx,
    };
    let layout = layout_for(data, latent);
    let mut draws = Vec::with_capacity(config.retained() * layout.width());
    let mut adaptation = Vec::new();
    let mut frozen_at: Vec<(f64, f64)> = Vec::new();
    let warmup = config.tau_warmup();
    for t in 0..config.iterations {
        let adapting = t < config.burn_in;
        if t == config.burn_in {
            for b in &mut s.blocks {
                b.frozen = true;
            }
            frozen_at = s.blocks.iter().map(|b| b.fingerprint()).collect();
        }
        s.step_beta(Proc::O, adapting);
        s.step_beta(Proc::P, adapting);
        s.step_delta(Proc::O, adapting);
        s.step_delta(Proc::P, adapting);
        s.step_rho(adapting);
        s.step_phi(Proc::O, adapting)?;
        s.step_phi(Proc::P, adapting)?;
        s.step_nugget(adapting);
        if t >= warmup {
            s.step_tau(Proc::O, adapting);
            s.step_tau(Proc::P, adapting);
        }
        if adapting && (t + 1) % config.adapt_window == 0 {
            for (bi, b) in s.blocks.iter_mut().enumerate() {
                let rate = b.end_window();
                adaptation.push(AdaptationRecord {
                    iteration: t + 1,
                    block: bi,
                    scale: b.scale(),
                    window_acceptance: rate,
                });
            }
            // Forget the early transient once, halfway through burn-in.
            if t + 1 == (config.burn_in / 2 / config.adapt_window) * config.adapt_window {
                s.blocks.iter_mut().for_each(|b| b.restart_history());
            }
        }
        if !adapting && (t - config.burn_in + 1) % config.thin == 0 {
            draws.extend(layout.pack(&s.st.p));
        }
        if !s.st.ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {} at iteration {t}", s.st.ll)));
        }
    }
    let final_prints: Vec<(f64, f64)> = s.blocks.iter().map(|b| b.fingerprint()).collect();
    let adaptation_frozen = frozen_at == final_prints;
    debug_assert!(adaptation_frozen, "proposal scales changed after burn-in");
    let mut block_stats: Vec<BlockStats> = s.blocks.iter().map(|b| b.stats()).collect();
    for (name, present) in [
        ("tau_o", s.idx.tau_o.is_none()),
        ("tau_p", s.idx.tau_p.is_none()),
    ] {
        if present {
            block_stats.push(BlockStats {
                name: name.into(),
                acceptance: 1.0,
                burn_in_acceptance: 1.0,
                scale: f64::NAN,
            });
        }
    }
    Ok(Chain {
        kind,
        layout,
        names: layout.names(),
        draws,
        blocks: block_stats,
        adaptation,
        seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
        iterations: config.iterations,
        burn_in: config.burn_in,
        thin: config.thin,
        adaptation_frozen,
        initial: p0,
    })
}

/// Adaptive random-walk Metropolis on an arbitrary log density, using the
/// same single-block machinery as [`fit`]. Returns the retained draws and
/// the post-burn-in acceptance rate.
pub fn sample_log_density(
    log_density: impl Fn(&[f64]) -> f64,
    init: &[f64],
    config: &SamplerConfig,
) -> Result<(Vec<Vec<f64>>, f64)> {
    config.validate()?;
    let mut x = init.to_vec();
    let mut lp = log_density(&x);
    if !lp.is_finite() {
        return Err(Error::InvalidInitialization(format!("log density is {lp} at the starting point")));
    }
    let target = if init.len() == 1 { config.target_scalar } else { config.target_vector };
    let mut block = Adaptive::new("x", init.len(), target, config.initial_scale_vector, true);
    let mut rng = rng::stream(config.seed, 0);
    let mut out = Vec::with_capacity(config.retained());
    for t in 0..config.iterations {
        let adapting = t < config.burn_in;
        if t == config.burn_in {
            block.frozen = true;
        }
        let prop = block.propose(&x, &mut rng);
        let lp_new = log_density(&prop);
        let log_alpha = lp_new - lp;
        let ok = accept(log_alpha, &mut rng);
        if ok {
            x = prop;
            lp = lp_new;
        }
        block.record(log_alpha, ok, adapting);
        if adapting {
            block.observe(&x);
            if (t + 1) % config.adapt_window == 0 {
                block.end_window();
            }
        } else if (t - config.burn_in + 1) % config.thin == 0 {
            out.push(x.clone());
        }
    }
    Ok((out, block.stats().acceptance))
}

/// Coefficient-to-field maps at prediction sites.
#[derive(Debug, Clone, Copy)]
pub enum PredictionDesign<'a> {
    LowRank {
        occurrence: &'a TermDesign,
        prevalence: &'a TermDesign,
    },
    /// Kriging from the training sites of the full-rank comparator.
    Gold {
        train_sites: &'a [Point2],
        sites: &'a [Point2],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Posterior mean of `E[Z]` per site.
    pub mean: Vec<f64>,
    /// Posterior standard deviation of `E[Z]` per site.
    pub sd: Vec<f64>,
    /// Posterior mean presence probability.
    pub prob: Vec<f64>,
    /// Posterior mean prevalence linear predictor.
    pub eta_p: Vec<f64>,
    pub draws_used: usize,
}

fn exp_cross_corr(a: &[Point2], b: &[Point2], phi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| (-a[i].dist(&b[j]) / phi).exp())
}

/// Posterior predictive summaries at new sites from at most `max_draws`
/// evenly spaced retained draws.
pub fn predict(
    chain: &Chain,
    family: &TwoPartFamily,
    link: LinkFunction,
    x_cv: &DMatrix<f64>,
    design: PredictionDesign<'_>,
    max_draws: usize,
) -> Result<Prediction> {
    let n = x_cv.nrows();
    if chain.is_empty() {
        return Err(Error::InvalidArgument("chain has no draws".into()));
    }
    if x_cv.ncols() != chain.layout.k_o {
        return Err(Error::DimensionMismatch(format!(
            "prediction design has {} covariates, chain {}",
            x_cv.ncols(),
            chain.layout.k_o
        )));
    }
    let gold_geom = match design {
        PredictionDesign::LowRank { occurrence, prevalence } => {
            if occurrence.rank() != chain.layout.p_o || prevalence.rank() != chain.layout.p_p {
                return Err(Error::DimensionMismatch(format!(
                    "prediction bases have ranks ({}, {}) but the chain has ({}, {})",
                    occurrence.rank(),
                    prevalence.rank(),
                    chain.layout.p_o,
                    chain.layout.p_p
                )));
            }
            if occurrence.nrows() != n || prevalence.nrows() != n {
                return Err(Error::DimensionMismatch("prediction design rows differ from covariates".into()));
            }
            None
        }
        PredictionDesign::Gold { train_sites, sites } => {
            if train_sites.len() != chain.layout.p_o || sites.len() != n {
                return Err(Error::DimensionMismatch("gold prediction sites do not match the chain".into()));
            }
            Some(GoldDesign::new(train_sites.to_vec()))
        }
    };
    let total = chain.len();
    let use_n = max_draws.clamp(1, total);
    let picks: Vec<usize> = (0..use_n)
        .map(|i| if use_n == 1 { total - 1 } else { i * (total - 1) / (use_n - 1) })
        .collect();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut prob = vec![0.0; n];
    let mut eta_sum = vec![0.0; n];
    for (c, &i) in picks.iter().enumerate() {
        let p = chain.params(i);
        let (w_o, w_p) = match design {
            PredictionDesign::LowRank { occurrence, prevalence } => {
                (occurrence.apply(&p.delta_o), prevalence.apply(&p.delta_p))
            }
            PredictionDesign::Gold { train_sites, sites } => {
                let g = gold_geom.as_ref().expect("gold");
                let [a, b] = p.phi.ok_or_else(|| Error::InvalidArgument("gold chain lacks ranges".into()))?;
                let krige = |phi: f64, gamma: &[f64]| -> Result<Vec<f64>> {
                    let l = g.factor(phi)?;
                    let mut v = gamma.to_vec();
                    linalg::backward_solve_transpose(&l, &mut v);
                    Ok(linalg::mat_vec(&exp_cross_corr(sites, train_sites, phi), &v))
                };
                (krige(a, &p.delta_o)?, krige(b, &p.delta_p)?)
            }
        };
        let xb_o = fixed_effects(x_cv, &p.beta_o)?;
        let xb_p = fixed_effects(x_cv, &p.beta_p)?;
        let nugget = p.nugget.unwrap_or(1.0);
        let k = (c + 1) as f64;
        for s in 0..n {
            let pi = link.inverse(xb_o[s] + w_o[s]);
            let eta = xb_p[s] + w_p[s];
            let mu = predictive_mean(family, pi, family.prevalence_param(eta), nugget);
            let d = mu - mean[s];
            mean[s] += d / k;
            m2[s] += d * (mu - mean[s]);
            prob[s] += pi;
            eta_sum[s] += eta;
        }
    }
    let k = use_n as f64;
    Ok(Prediction {
        sd: m2
            .iter()
            .map(|v| if use_n > 1 { (v / (k - 1.0)).sqrt() } else { 0.0 })
            .collect(),
        mean,
        prob: prob.iter().map(|v| v / k).collect(),
        eta_p: eta_sum.iter().map(|v| v / k).collect(),
        draws_used: use_n,
    })
}
