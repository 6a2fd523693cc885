//! Automated rank selection: maximum-likelihood GLMs on augmented occurrence
//! and prevalence datasets over a grid of candidate basis ranks.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Projector};
use crate::likelihoods::{FamilyKind, TwoPartFamily};
use crate::linalg;
use crate::metrics;
use crate::special::{log1mexp, log_sigmoid, sigmoid};
use crate::spectral::MoranBasis;

/// Ridge added to every GLM normal equation.
pub const RIDGE: f64 = 1e-6;
const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;

/// 1 where `z > 0`, else 0.
pub fn binarize_occurrence(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveSubset {
    pub z: Vec<f64>,
    pub x: DMatrix<f64>,
    pub sites: Vec<Point2>,
    /// Row indices into the original data.
    pub indices: Vec<usize>,
}

/// Rows with `z > 0`, in their original order.
pub fn positive_subset(z: &[f64], x: &DMatrix<f64>, sites: &[Point2]) -> Result<PositiveSubset> {
    if x.nrows() != z.len() || sites.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations, {} design rows, {} sites",
            z.len(),
            x.nrows(),
            sites.len()
        )));
    }
    let indices: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
    if indices.is_empty() {
        return Err(Error::EmptyPrevalence);
    }
    Ok(PositiveSubset {
        z: indices.iter().map(|&i| z[i]).collect(),
        x: x.select_rows(indices.iter()),
        sites: indices.iter().map(|&i| sites[i]).collect(),
        indices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlmKind {
    Logistic,
    ZeroTruncatedPoisson,
    Lognormal,
    Linear,
}

impl GlmKind {
    /// The prevalence GLM fitted to the positive observations of a family.
    pub fn for_prevalence(family: &TwoPartFamily) -> Self {
        match family.kind {
            FamilyKind::HurdleCount | FamilyKind::MixturePoisson => GlmKind::ZeroTruncatedPoisson,
            FamilyKind::HurdleLognormal => GlmKind::Lognormal,
            FamilyKind::MixtureTobit => GlmKind::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub kind: GlmKind,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Residual variance on the fitted scale (least-squares kinds only).
    pub residual_variance: f64,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        linalg::mat_vec(x, &self.coefficients)
    }

    /// Predictions on the response scale: probabilities (logistic), means of
    /// the zero-truncated Poisson, lognormal means, or linear fits.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let eta = self.linear_predictor(x);
        eta.into_iter()
            .map(|e| match self.kind {
                GlmKind::Logistic => sigmoid(e),
                GlmKind::ZeroTruncatedPoisson => ztp_mean(e.exp()),
                GlmKind::Lognormal => (e + 0.5 * self.residual_variance).exp(),
                GlmKind::Linear => e,
            })
            .collect()
    }
}

fn ztp_mean(theta: f64) -> f64 {
    if theta < 1e-8 {
        1.0 + 0.5 * theta
    } else {
        theta / -(-theta).exp_m1()
    }
}

/// Per-observation (log-likelihood, score, weight) in the linear predictor.
fn glm_terms(kind: GlmKind, y: f64, eta: f64) -> (f64, f64, f64) {
    match kind {
        GlmKind::Logistic => {
            let p = sigmoid(eta);
            let ll = if y > 0.0 { log_sigmoid(eta) } else { log_sigmoid(-eta) };
            (ll, y - p, p * (1.0 - p))
        }
        GlmKind::ZeroTruncatedPoisson => {
            let theta = eta.exp();
            let ll = y * eta - theta - log1mexp(theta);
            let mean = ztp_mean(theta);
            let w = if theta < 1e-4 {
                0.5 * theta
            } else {
                let e = (-theta).exp();
                let d = -(-theta).exp_m1();
                theta * (d - theta * e) / (d * d)
            };
            (ll, y - mean, w)
        }
        GlmKind::Lognormal | GlmKind::Linear => unreachable!("least-squares kinds are solved directly"),
    }
}

fn solve_spd(h: DMatrix<f64>, g: &[f64]) -> Result<Vec<f64>> {
    let l = linalg::cholesky(h)?;
    let mut v = g.to_vec();
    linalg::forward_solve(&l, &mut v);
    linalg::backward_solve_transpose(&l, &mut v);
    Ok(v)
}

fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.max(0.0).sqrt();
        xw.row_mut(i).iter_mut().for_each(|v| *v *= s);
    }
    let mut h = xw.tr_mul(&xw);
    for j in 0..h.nrows() {
        h[(j, j)] += RIDGE;
    }
    h
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Maximum-likelihood fit of a GLM with a small ridge penalty.
pub fn fit_glm(kind: GlmKind, x: &DMatrix<f64>, y: &[f64]) -> Result<GlmFit> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows, response {}",
            x.nrows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("GLM fit on an empty response".into()));
    }
    let k = x.ncols();
    match kind {
        GlmKind::Linear | GlmKind::Lognormal => {
            let target: Vec<f64> = match kind {
                GlmKind::Lognormal => {
                    if y.iter().any(|&v| v <= 0.0) {
                        return Err(Error::InvalidArgument("lognormal GLM needs positive responses".into()));
                    }
                    y.iter().map(|v| v.ln()).collect()
                }
                _ => y.to_vec(),
            };
            let h = weighted_gram(x, &vec![1.0; y.len()]);
            let xty = x.tr_mul(&DVector::from_column_slice(&target));
            let beta = solve_spd(h, xty.as_slice())?;
            let fitted = linalg::mat_vec(x, &beta);
            let rss: f64 = fitted.iter().zip(&target).map(|(f, t)| (t - f).powi(2)).sum();
            let dof = if y.len() > k { y.len() - k } else { y.len() };
            let resid: Vec<f64> = target.iter().zip(&fitted).map(|(t, f)| t - f).collect();
            let mut grad = x.tr_mul(&DVector::from_column_slice(&resid));
            for j in 0..k {
                grad[j] -= RIDGE * beta[j];
            }
            Ok(GlmFit {
                kind,
                coefficients: beta,
                iterations: 1,
                gradient_norm: grad.norm(),
                residual_variance: (rss / dof as f64).max(1e-12),
            })
        }
        GlmKind::Logistic | GlmKind::ZeroTruncatedPoisson => {
            if kind == GlmKind::ZeroTruncatedPoisson
                && y.iter().any(|&v| v < 1.0 || v.fract() != 0.0)
            {
                return Err(Error::InvalidArgument(
                    "zero-truncated Poisson GLM needs positive integer responses".into(),
                ));
            }
            newton(kind, x, y)
        }
    }
}

fn newton(kind: GlmKind, x: &DMatrix<f64>, y: &[f64]) -> Result<GlmFit> {
    let k = x.ncols();
    let mut beta = vec![0.0; k];
    let objective = |beta: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let eta = linalg::mat_vec(x, beta);
        let mut ll = -0.5 * RIDGE * beta.iter().map(|b| b * b).sum::<f64>();
        let mut score = Vec::with_capacity(y.len());
        let mut w = Vec::with_capacity(y.len());
        for (yi, ei) in y.iter().zip(&eta) {
            let (l, s, wi) = glm_terms(kind, *yi, *ei);
            ll += l;
            score.push(s);
            w.push(wi);
        }
        (ll, score, w)
    };
    let (mut ll, mut score, mut w) = objective(&beta);
    let mut grad_norm = f64::INFINITY;
    for iter in 0..MAX_ITER {
        let mut grad = x.tr_mul(&DVector::from_column_slice(&score));
        for j in 0..k {
            grad[j] -= RIDGE * beta[j];
        }
        grad_norm = grad.norm();
        if grad_norm <= GRAD_TOL {
            return Ok(GlmFit {
                kind,
                coefficients: beta,
                iterations: iter,
                gradient_norm: grad_norm,
                residual_variance: f64::NAN,
            });
        }
        let step = solve_spd(weighted_gram(x, &w), grad.as_slice())?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let (ll_c, score_c, w_c) = objective(&cand);
            if ll_c.is_finite() && ll_c >= ll - 1e-12 * ll.abs().max(1.0) {
                moved = norm(&step) * t > 1e-14 * (1.0 + norm(&beta));
                beta = cand;
                ll = ll_c;
                score = score_c;
                w = w_c;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // Stalled at machine precision: accept if the gradient is small
            // relative to the problem scale.
            if grad_norm <= 1e-6 * (y.len() as f64).max(1.0) {
                return Ok(GlmFit {
                    kind,
                    coefficients: beta,
                    iterations: iter + 1,
                    gradient_norm: grad_norm,
                    residual_variance: f64::NAN,
                });
            }
            return Err(Error::GlmNonConvergence {
                iterations: iter + 1,
                gradient_norm: grad_norm,
            });
        }
    }
    Err(Error::GlmNonConvergence {
        iterations: MAX_ITER,
        gradient_norm: grad_norm,
    })
}

/// Candidate ranks for the heuristic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankGrid {
    pub p_max: usize,
    pub candidates: Vec<usize>,
}

impl RankGrid {
    /// `h` equally spaced integers in `[2, p_max]` (duplicates after rounding
    /// are dropped). Requires `p_max < m`.
    pub fn new(p_max: usize, h: usize, m: usize) -> Result<Self> {
        if p_max < 2 || p_max >= m {
            return Err(Error::InvalidArgument(format!(
                "p_max = {p_max} must satisfy 2 <= p_max < m = {m}"
            )));
        }
        if h == 0 {
            return Err(Error::InvalidArgument("rank grid is empty".into()));
        }
        let mut candidates: Vec<usize> = if h == 1 {
            vec![p_max]
        } else {
            (0..h)
                .map(|i| (2.0 + i as f64 * (p_max - 2) as f64 / (h - 1) as f64).round() as usize)
                .collect()
        };
        candidates.dedup();
        Ok(Self { p_max, candidates })
    }

    /// `P_max = min(floor(m / 4), 250)` with 25 candidates.
    pub fn default_for(m: usize) -> Result<Self> {
        Self::new((m / 4).min(250), 25, m)
    }

    pub fn from_candidates(mut candidates: Vec<usize>, m: usize) -> Result<Self> {
        candidates.sort_unstable();
        candidates.dedup();
        let Some(&p_max) = candidates.last() else {
            return Err(Error::InvalidArgument("rank grid is empty".into()));
        };
        if candidates[0] < 1 || p_max >= m {
            return Err(Error::InvalidArgument(format!("candidate ranks must lie in [1, {m})")));
        }
        Ok(Self { p_max, candidates })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankScore {
    pub rank: usize,
    pub auc_occurrence: f64,
    pub rmspe_occurrence: f64,
    pub rmspe_prevalence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankChoice {
    pub p_o: usize,
    pub p_p: usize,
    pub scores: Vec<RankScore>,
}

impl RankChoice {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,auc_occurrence,rmspe_occurrence,rmspe_prevalence\n");
        for s in &self.scores {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.rank, s.auc_occurrence, s.rmspe_occurrence, s.rmspe_prevalence
            ));
        }
        out
    }
}

/// `A M` for the training sites, one column per basis vector.
pub fn spatial_design_pool(projector: &Projector, basis: &MoranBasis) -> Result<DMatrix<f64>> {
    if projector.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "projector has {} columns but basis has {} rows",
            projector.ncols(),
            basis.dim()
        )));
    }
    let mv = basis.vectors();
    let mut out = DMatrix::zeros(projector.nrows(), basis.rank());
    for i in 0..projector.nrows() {
        for &(j, w) in projector.row(i) {
            if w != 0.0 {
                for c in 0..basis.rank() {
                    out[(i, c)] += w * mv[(j, c)];
                }
            }
        }
    }
    Ok(out)
}

fn augmented(x: &DMatrix<f64>, pool: &DMatrix<f64>, rows: &[usize], p: usize) -> DMatrix<f64> {
    let k = x.ncols();
    DMatrix::from_fn(rows.len(), k + p, |r, c| {
        if c < k {
            x[(rows[r], c)]
        } else {
            pool[(rows[r], c - k)]
        }
    })
}

/// Run the heuristic. `pool` holds `A M` for the same rows as `x` and `z` and
/// must have at least `grid.p_max` columns.
pub fn select_ranks(
    x: &DMatrix<f64>,
    z: &[f64],
    pool: &DMatrix<f64>,
    family: &TwoPartFamily,
    grid: &RankGrid,
    split_seed: u64,
) -> Result<RankChoice> {
    let n = z.len();
    if x.nrows() != n || pool.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} observations, {} design rows, {} pool rows",
            n,
            x.nrows(),
            pool.nrows()
        )));
    }
    if grid.candidates.is_empty() {
        return Err(Error::InvalidArgument("rank grid is empty".into()));
    }
    if pool.ncols() < grid.p_max {
        return Err(Error::InvalidArgument(format!(
            "basis pool has {} columns, grid needs {}",
            pool.ncols(),
            grid.p_max
        )));
    }
    for &v in z {
        family.check_observation(v)?;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let n_fit = ((n as f64) * 0.8).round() as usize;
    let mut fit_rows = order[..n_fit].to_vec();
    let mut hold_rows = order[n_fit..].to_vec();
    fit_rows.sort_unstable();
    hold_rows.sort_unstable();
    if hold_rows.is_empty() {
        return Err(Error::InvalidArgument("holdout split is empty".into()));
    }
    let occ = binarize_occurrence(z);
    let pos_fit: Vec<usize> = fit_rows.iter().copied().filter(|&i| z[i] > 0.0).collect();
    let pos_hold: Vec<usize> = hold_rows.iter().copied().filter(|&i| z[i] > 0.0).collect();
    if pos_fit.is_empty() || pos_hold.is_empty() {
        return Err(Error::EmptyPrevalence);
    }
    let prev_kind = GlmKind::for_prevalence(family);
    let labels: Vec<bool> = hold_rows.iter().map(|&i| occ[i] > 0.0).collect();
    let occ_hold: Vec<f64> = hold_rows.iter().map(|&i| occ[i]).collect();
    let y_occ: Vec<f64> = fit_rows.iter().map(|&i| occ[i]).collect();
    let y_pos: Vec<f64> = pos_fit.iter().map(|&i| z[i]).collect();
    let z_pos_hold: Vec<f64> = pos_hold.iter().map(|&i| z[i]).collect();

    let mut scores = Vec::with_capacity(grid.candidates.len());
    for &p in &grid.candidates {
        let occ_fit = fit_glm(GlmKind::Logistic, &augmented(x, pool, &fit_rows, p), &y_occ)?;
        let prob = occ_fit.predict(&augmented(x, pool, &hold_rows, p));
        let auc_occurrence = metrics::auc(&labels, &prob).unwrap_or(f64::NAN);
        let rmspe_occurrence = metrics::rmspe(&occ_hold, &prob)?;
        let prev_fit = fit_glm(prev_kind, &augmented(x, pool, &pos_fit, p), &y_pos)?;
        let pred = prev_fit.predict(&augmented(x, pool, &pos_hold, p));
        let rmspe_prevalence = metrics::rmspe(&z_pos_hold, &pred)?;
        scores.push(RankScore {
            rank: p,
            auc_occurrence,
            rmspe_occurrence,
            rmspe_prevalence,
        });
    }
    // Candidates are ascending, so keeping the first best realizes the
    // smaller-rank tie-break.
    let mut best_o = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        let b = &scores[best_o];
        let better = match s.auc_occurrence.partial_cmp(&b.auc_occurrence) {
            Some(std::cmp::Ordering::Greater) => true,
            Some(std::cmp::Ordering::Equal) => s.rmspe_occurrence < b.rmspe_occurrence,
            _ => b.auc_occurrence.is_nan() && !s.auc_occurrence.is_nan(),
        };
        if better {
            best_o = i;
        }
    }
    let mut best_p = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if s.rmspe_prevalence < scores[best_p].rmspe_prevalence {
            best_p = i;
        }
    }
    Ok(RankChoice {
        p_o: scores[best_o].rank,
        p_p: scores[best_p].rank,
        scores,
    })
}
