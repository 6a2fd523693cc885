//! Validation scores and chain diagnostics.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub rmspe_total: f64,
    /// RMSPE over validation sites with a nonzero observation; NaN if none.
    pub rmspe_positive: f64,
    /// NaN when the validation labels contain a single class.
    pub auc: f64,
    pub n_cv: usize,
    pub n_positive: usize,
}

/// Root mean squared prediction error.
pub fn rmspe(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!(
            "truth has {} values, predictions {}",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("rmspe of an empty vector".into()));
    }
    let sse: f64 = truth.iter().zip(predicted).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / truth.len() as f64).sqrt())
}

/// Mann-Whitney AUC: the probability that a random positive outscores a
/// random negative, counting ties as one half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::InvalidArgument("auc needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("auc scores contain NaN".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = 0.5 * ((i + 1) + (j + 1)) as f64;
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * positives as f64;
        i = j + 1;
    }
    let (n0, n1) = (n0 as f64, n1 as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n0 * n1))
}

/// Scores a vector of predictions against validation observations.
pub fn validation_report(truth: &[f64], predicted: &[f64], presence: &[f64]) -> Result<ValidationReport> {
    let rmspe_total = rmspe(truth, predicted)?;
    if presence.len() != truth.len() {
        return Err(Error::DimensionMismatch("presence scores and truth differ in length".into()));
    }
    let (tp, pp): (Vec<f64>, Vec<f64>) = truth
        .iter()
        .zip(predicted)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| (*t, *p))
        .unzip();
    let rmspe_positive = if tp.is_empty() { f64::NAN } else { rmspe(&tp, &pp)? };
    let labels: Vec<bool> = truth.iter().map(|&z| z > 0.0).collect();
    let auc = auc(&labels, presence).unwrap_or(f64::NAN);
    Ok(ValidationReport {
        rmspe_total,
        rmspe_positive,
        auc,
        n_cv: truth.len(),
        n_positive: tp.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    /// Monte Carlo standard error of the chain mean.
    pub se: f64,
    pub ess: f64,
}

/// Batch-means standard error and effective sample size with `floor(sqrt(T))`
/// equal batches; any remainder at the end of the chain is dropped.
pub fn ess_batch_means(chain: &[f64]) -> Result<BatchMeans> {
    let t = chain.len();
    if t < 100 {
        return Err(Error::InvalidArgument(format!("chain of length {t} is too short for batch means")));
    }
    let b = (t as f64).sqrt().floor() as usize;
    let len = t / b;
    let used = b * len;
    let mean = chain.iter().sum::<f64>() / t as f64;
    let s2 = chain.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    if s2 == 0.0 || !s2.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let means: Vec<f64> = chain[..used]
        .chunks_exact(len)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var_means = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    let sigma2 = len as f64 * var_means;
    if sigma2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(BatchMeans {
        se: (sigma2 / t as f64).sqrt(),
        ess: t as f64 * s2 / sigma2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub mean: f64,
    pub se: f64,
    /// NaN for constant chains.
    pub ess: f64,
    pub ess_per_sec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDiagnostics {
    pub seconds: f64,
    pub parameters: Vec<ParameterDiagnostics>,
}

impl ChainDiagnostics {
    /// Diagnostics for every named column of a draw matrix.
    pub fn compute<'a>(columns: impl IntoIterator<Item = (&'a str, Vec<f64>)>, seconds: f64) -> Self {
        let parameters = columns
            .into_iter()
            .map(|(name, col)| {
                let mean = if col.is_empty() {
                    f64::NAN
                } else {
                    col.iter().sum::<f64>() / col.len() as f64
                };
                let (se, ess) = match ess_batch_means(&col) {
                    Ok(b) => (b.se, b.ess),
                    Err(_) => (f64::NAN, f64::NAN),
                };
                ParameterDiagnostics {
                    name: name.to_string(),
                    mean,
                    se,
                    ess,
                    ess_per_sec: ess / seconds,
                }
            })
            .collect();
        Self { seconds, parameters }
    }

    pub fn get(&self, name: &str) -> Option<&ParameterDiagnostics> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Mean ES/sec over parameters whose name starts with `prefix`.
    pub fn mean_ess_per_sec(&self, prefix: &str) -> f64 {
        let v: Vec<f64> = self
            .parameters
            .iter()
            .filter(|p| p.name.starts_with(prefix) && p.ess_per_sec.is_finite())
            .map(|p| p.ess_per_sec)
            .collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Central credible interval of the given level.
pub fn credible_interval(draws: &[f64], level: f64) -> (f64, f64) {
    let a = 0.5 * (1.0 - level);
    (quantile(draws, a), quantile(draws, 1.0 - a))
}

/// Fraction of replicates whose central `level` interval contains the truth,
/// per parameter. `draws[r][j]` is the sample of parameter `j` in replicate `r`.
pub fn coverage(draws: &[Vec<Vec<f64>>], truths: &[f64], level: f64) -> Result<Vec<f64>> {
    if draws.len() < 2 {
        return Err(Error::InvalidArgument("coverage needs at least two replicates".into()));
    }
    let mut hits = vec![0usize; truths.len()];
    for rep in draws {
        if rep.len() != truths.len() {
            return Err(Error::DimensionMismatch(format!(
                "replicate has {} parameters, expected {}",
                rep.len(),
                truths.len()
            )));
        }
        for (j, col) in rep.iter().enumerate() {
            let (lo, hi) = credible_interval(col, level);
            if lo <= truths[j] && truths[j] <= hi {
                hits[j] += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / draws.len() as f64).collect())
}

/// Coverage from precomputed intervals.
pub fn coverage_of_intervals(intervals: &[(f64, f64)], truth: f64) -> f64 {
    if intervals.is_empty() {
        return f64::NAN;
    }
    let hits = intervals.iter().filter(|(lo, hi)| *lo <= truth && truth <= *hi).count();
    hits as f64 / intervals.len() as f64
}
