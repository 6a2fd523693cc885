//! Two-part observation families: link functions, linear predictors,
//! per-site log-likelihoods, and model-implied means.
//!
//! Throughout, `pi` is the presence probability `P(O = 1)`: a site is zero
//! with probability `1 - pi` from the occurrence process, and otherwise takes
//! a draw from the prevalence distribution (which may itself be zero for the
//! mixture families).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::Projector;
use crate::linalg;
use crate::spectral::MoranBasis;
use crate::special::{
    ln_factorial, log1mexp, log_add_exp, log_normal_cdf, log_sigmoid, normal_cdf, normal_logpdf,
    normal_pdf, sigmoid,
};

/// Occurrence probabilities are kept inside `[PROB_EPS, 1 - PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    /// Bernoulli occurrence, zero-truncated Poisson prevalence.
    HurdleCount,
    /// Bernoulli occurrence, lognormal prevalence.
    HurdleLognormal,
    /// Zero-inflated Poisson.
    MixturePoisson,
    /// Zero-inflated type I Tobit.
    MixtureTobit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPartFamily {
    pub kind: FamilyKind,
    /// Censoring threshold; only used by [`FamilyKind::MixtureTobit`].
    pub tobit_threshold: f64,
}

impl TwoPartFamily {
    pub const fn new(kind: FamilyKind) -> Self {
        Self {
            kind,
            tobit_threshold: 0.0,
        }
    }

    pub const fn hurdle_count() -> Self {
        Self::new(FamilyKind::HurdleCount)
    }

    pub const fn hurdle_lognormal() -> Self {
        Self::new(FamilyKind::HurdleLognormal)
    }

    pub const fn mixture_poisson() -> Self {
        Self::new(FamilyKind::MixturePoisson)
    }

    pub fn mixture_tobit(threshold: f64) -> Self {
        Self {
            kind: FamilyKind::MixtureTobit,
            tobit_threshold: threshold,
        }
    }

    pub fn is_count(&self) -> bool {
        matches!(self.kind, FamilyKind::HurdleCount | FamilyKind::MixturePoisson)
    }

    /// Semi-continuous families carry the nugget variance.
    pub fn is_semicontinuous(&self) -> bool {
        !self.is_count()
    }

    pub fn is_hurdle(&self) -> bool {
        matches!(self.kind, FamilyKind::HurdleCount | FamilyKind::HurdleLognormal)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::HurdleCount => "hurdle-count",
            FamilyKind::HurdleLognormal => "hurdle-lognormal",
            FamilyKind::MixturePoisson => "mixture-poisson",
            FamilyKind::MixtureTobit => "mixture-tobit",
        }
    }

    /// Map the prevalence linear predictor to the family's parameter:
    /// `theta = exp(eta)` for counts, `mu = eta` otherwise.
    pub fn prevalence_param(&self, eta_p: f64) -> f64 {
        if self.is_count() {
            eta_p.exp()
        } else {
            eta_p
        }
    }

    /// Check that `z` can be produced by this family.
    pub fn check_observation(&self, z: f64) -> Result<()> {
        let bad = |why: &str| Err(Error::InconsistentObservation(format!("z = {z}: {why}")));
        if !z.is_finite() || z < 0.0 {
            return bad("observations must be finite and non-negative");
        }
        if self.is_count() && z.fract() != 0.0 {
            return bad("count families need integer observations");
        }
        if self.kind == FamilyKind::MixtureTobit && z > 0.0 && z <= self.tobit_threshold {
            return bad("positive values must exceed the censoring threshold");
        }
        Ok(())
    }

    /// Validate the prevalence parameter and nugget for this family.
    fn check_params(&self, param: f64, nugget: f64) -> Result<()> {
        if self.is_count() {
            if !(param > 0.0 && param.is_finite()) {
                return Err(Error::InvalidArgument(format!("intensity must be positive, got {param}")));
            }
        } else if !(nugget > 0.0 && nugget.is_finite()) || !param.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "semi-continuous families need finite mean and positive variance, got ({param}, {nugget})"
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for TwoPartFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hurdle-count" | "hurdle_count" => Ok(Self::hurdle_count()),
            "hurdle-lognormal" | "hurdle_lognormal" | "hurdle-semicontinuous" => {
                Ok(Self::hurdle_lognormal())
            }
            "mixture-poisson" | "mixture_poisson" | "zip" | "mixture-count" => {
                Ok(Self::mixture_poisson())
            }
            "mixture-tobit" | "mixture_tobit" | "zit" | "mixture-semicontinuous" => {
                Ok(Self::mixture_tobit(0.0))
            }
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}

impl std::fmt::Display for TwoPartFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinkFunction {
    #[default]
    Logit,
    Probit,
}

impl LinkFunction {
    /// `g^{-1}(eta)` clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn inverse(&self, eta: f64) -> f64 {
        let p = match self {
            LinkFunction::Logit => sigmoid(eta),
            LinkFunction::Probit => normal_cdf(eta),
        };
        p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    }

    /// `(log pi, log(1 - pi))` evaluated stably from `eta`.
    #[inline]
    pub fn log_probs(&self, eta: f64) -> (f64, f64) {
        match self {
            LinkFunction::Logit => (log_sigmoid(eta), log_sigmoid(-eta)),
            LinkFunction::Probit => (log_normal_cdf(eta), log_normal_cdf(-eta)),
        }
    }
}

impl std::str::FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logit" => Ok(LinkFunction::Logit),
            "probit" => Ok(LinkFunction::Probit),
            other => Err(Error::Config(format!("unknown link '{other}'"))),
        }
    }
}

impl std::fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkFunction::Logit => "logit",
            LinkFunction::Probit => "probit",
        })
    }
}

/// Occurrence probabilities for a vector of linear predictors.
pub fn occurrence_prob(eta_o: &[f64], link: LinkFunction) -> Vec<f64> {
    eta_o.iter().map(|&e| link.inverse(e)).collect()
}

/// Full parameter vector of a two-part model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub beta_o: Vec<f64>,
    pub beta_p: Vec<f64>,
    pub delta_o: Vec<f64>,
    pub delta_p: Vec<f64>,
    pub tau_o: f64,
    pub tau_p: f64,
    /// Cross-correlation of the coefficient blocks (correlated variant only).
    pub rho: Option<f64>,
    /// Prevalence variance of the semi-continuous families.
    pub nugget: Option<f64>,
    /// Exponential-correlation ranges `(phi_o, phi_p)` of the full-rank comparator.
    pub phi: Option<[f64; 2]>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_o > 0.0 && self.tau_p > 0.0) {
            return Err(Error::InvalidArgument("precisions must be positive".into()));
        }
        if let Some(rho) = self.rho {
            if !(rho.abs() < 1.0) {
                return Err(Error::InvalidArgument(format!("|rho| must be < 1, got {rho}")));
            }
        }
        if let Some([a, b]) = self.phi {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidArgument(format!("ranges must be positive, got ({a}, {b})")));
            }
        }
        if let Some(v) = self.nugget {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("nugget variance must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictors {
    pub occurrence: Vec<f64>,
    pub prevalence: Vec<f64>,
}

/// `X beta` for a row-major-agnostic dense design.
pub fn fixed_effects(x: &DMatrix<f64>, beta: &[f64]) -> Result<Vec<f64>> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but beta has {} entries",
            x.ncols(),
            beta.len()
        )));
    }
    if beta.is_empty() {
        return Ok(vec![0.0; x.nrows()]);
    }
    Ok(linalg::mat_vec(x, beta))
}

/// `X beta + A (M delta)`, computed as two products without forming `A M`.
pub fn linear_predictor(
    x: &DMatrix<f64>,
    beta: &[f64],
    projector: &Projector,
    basis: &MoranBasis,
    delta: &[f64],
) -> Result<Vec<f64>> {
    if projector.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but projector has {}",
            x.nrows(),
            projector.nrows()
        )));
    }
    if projector.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "projector has {} columns but basis has {} rows",
            projector.ncols(),
            basis.dim()
        )));
    }
    if delta.len() != basis.rank() {
        return Err(Error::DimensionMismatch(format!(
            "delta has {} entries but basis rank is {}",
            delta.len(),
            basis.rank()
        )));
    }
    let mut eta = fixed_effects(x, beta)?;
    let field = projector.apply(&basis.expand(delta));
    eta.iter_mut().zip(&field).for_each(|(e, f)| *e += f);
    Ok(eta)
}

/// Per-site constants that do not depend on parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteObservation {
    pub z: f64,
    /// `log z!` for counts, `log z` for the lognormal family, 0 otherwise.
    pub constant: f64,
}

impl SiteObservation {
    pub fn new(family: &TwoPartFamily, z: f64) -> Result<Self> {
        family.check_observation(z)?;
        let constant = if z > 0.0 {
            match family.kind {
                FamilyKind::HurdleCount | FamilyKind::MixturePoisson => ln_factorial(z),
                FamilyKind::HurdleLognormal => z.ln(),
                FamilyKind::MixtureTobit => 0.0,
            }
        } else {
            0.0
        };
        Ok(Self { z, constant })
    }
}

/// Site log-likelihood from `(log pi, log(1 - pi))` and the prevalence linear
/// predictor (`log theta` for counts, `mu` otherwise).
#[inline]
pub fn site_loglik(
    family: &TwoPartFamily,
    obs: &SiteObservation,
    log_pi: f64,
    log_1m_pi: f64,
    eta_p: f64,
    nugget: f64,
) -> f64 {
    let z = obs.z;
    match family.kind {
        FamilyKind::HurdleCount => {
            if z == 0.0 {
                log_1m_pi
            } else {
                let theta = eta_p.exp();
                log_pi + z * eta_p - theta - obs.constant - log1mexp(theta)
            }
        }
        FamilyKind::HurdleLognormal => {
            if z == 0.0 {
                log_1m_pi
            } else {
                log_pi + normal_logpdf(obs.constant, eta_p, nugget) - obs.constant
            }
        }
        FamilyKind::MixturePoisson => {
            let theta = eta_p.exp();
            if z == 0.0 {
                log_add_exp(log_1m_pi, log_pi - theta)
            } else {
                log_pi + z * eta_p - theta - obs.constant
            }
        }
        FamilyKind::MixtureTobit => {
            if z == 0.0 {
                let std = nugget.sqrt();
                log_add_exp(
                    log_1m_pi,
                    log_pi + log_normal_cdf((family.tobit_threshold - eta_p) / std),
                )
            } else {
                log_pi + normal_logpdf(z, eta_p, nugget)
            }
        }
    }
}

fn eta_from_param(family: &TwoPartFamily, param: f64) -> f64 {
    if family.is_count() {
        param.ln()
    } else {
        param
    }
}

/// Log-likelihood of one observation given the presence probability `pi`,
/// the prevalence parameter (`theta` for counts, `mu` otherwise) and the
/// nugget variance (ignored by count families).
pub fn loglik(family: &TwoPartFamily, z: f64, pi: f64, param: f64, nugget: f64) -> Result<f64> {
    let obs = SiteObservation::new(family, z)?;
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::InvalidArgument(format!("pi must lie in [0, 1], got {pi}")));
    }
    family.check_params(param, nugget)?;
    let (lp, l1mp) = (pi.ln(), (-pi).ln_1p());
    Ok(site_loglik(family, &obs, lp, l1mp, eta_from_param(family, param), nugget))
}

/// Sum of site log-likelihoods.
pub fn total_loglik(
    family: &TwoPartFamily,
    z: &[f64],
    pi: &[f64],
    params: &[f64],
    nugget: f64,
) -> Result<f64> {
    if z.len() != pi.len() || z.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "observations {}, probabilities {}, parameters {}",
            z.len(),
            pi.len(),
            params.len()
        )));
    }
    z.iter()
        .zip(pi)
        .zip(params)
        .map(|((&zi, &pi), &th)| loglik(family, zi, pi, th, nugget))
        .sum()
}

/// `E[Z]` under the two-part generative process.
pub fn predictive_mean(family: &TwoPartFamily, pi: f64, param: f64, nugget: f64) -> f64 {
    if pi == 0.0 {
        return 0.0;
    }
    match family.kind {
        FamilyKind::HurdleCount => {
            // theta / (1 - e^-theta), which tends to 1 as theta -> 0.
            let denom = -(-param).exp_m1();
            if param <= 0.0 {
                pi
            } else {
                pi * param / denom
            }
        }
        FamilyKind::HurdleLognormal => pi * (param + 0.5 * nugget).exp(),
        FamilyKind::MixturePoisson => pi * param,
        FamilyKind::MixtureTobit => {
            let s = nugget.sqrt();
            let a = (family.tobit_threshold - param) / s;
            // E[Y 1{Y > gamma}] for Y ~ N(mu, s^2).
            pi * (param * normal_cdf(-a) + s * normal_pdf(a))
        }
    }
}

fn sample_zero_truncated_poisson<R: Rng + ?Sized>(theta: f64, rng: &mut R) -> f64 {
    if theta > 1.0 {
        let pois = Poisson::new(theta).expect("positive intensity");
        loop {
            let k: f64 = pois.sample(rng);
            if k > 0.0 {
                return k;
            }
        }
    }
    // Inversion on the truncated pmf, which stays well conditioned for small
    // intensities where rejection would almost always fail.
    let u: f64 = rng.random();
    let norm = -(-theta).exp_m1();
    let mut k = 1.0;
    let mut pmf = theta * (-theta).exp() / norm;
    let mut cdf = pmf;
    while u > cdf && k < 1e6 {
        k += 1.0;
        pmf *= theta / k;
        cdf += pmf;
        if pmf < 1e-300 {
            break;
        }
    }
    k
}

/// One draw from the two-part process: returns `(occurred, z)`.
pub fn sample_observation<R: Rng + ?Sized>(
    family: &TwoPartFamily,
    pi: f64,
    param: f64,
    nugget: f64,
    rng: &mut R,
) -> (bool, f64) {
    let occurred = rng.random::<f64>() < pi;
    if !occurred {
        return (false, 0.0);
    }
    let z = match family.kind {
        FamilyKind::HurdleCount => sample_zero_truncated_poisson(param, rng),
        FamilyKind::MixturePoisson => {
            if param > 0.0 {
                Poisson::new(param).expect("positive intensity").sample(rng)
            } else {
                0.0
            }
        }
        FamilyKind::HurdleLognormal => {
            let e: f64 = StandardNormal.sample(rng);
            (param + nugget.sqrt() * e).exp()
        }
        FamilyKind::MixtureTobit => {
            let e: f64 = StandardNormal.sample(rng);
            let latent = param + nugget.sqrt() * e;
            if latent > family.tobit_threshold {
                latent
            } else {
                0.0
            }
        }
    };
    (true, z)
}
