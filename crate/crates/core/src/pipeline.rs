//! One replicate end to end: mesh and basis pool, rank selection, fits for
//! each requested parameterization, prediction at the validation sites and
//! scoring. Also the median table and plot-data surfaces.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{adjacency, build_mesh, build_projector, BoundingBox, MeshMode, Point2, Projector, TriangleMesh};
use crate::inference::{
    fit, predict, BlockStats, Chain, FitData, LatentParameterization, ParameterizationKind, Prediction,
    PredictionDesign, PriorSpec, SamplerConfig, TermDesign,
};
use crate::likelihoods::{LinkFunction, TwoPartFamily};
use crate::metrics::{self, ChainDiagnostics, ValidationReport};
use crate::rank_selection::{select_ranks, spatial_design_pool, RankChoice, RankGrid};
use crate::simulation::{grid_sites, BisquareBasis, Dataset};
use crate::spectral::{build_precision, moran_basis, MoranBasis, PrecisionSpec, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub mode: MeshMode,
    pub target_vertices: usize,
    pub padding: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            mode: MeshMode::RegularLattice,
            target_vertices: 1000,
            padding: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankStrategy {
    /// Heuristic search; `p_max = None` means `min(m / 4, 250)`.
    Grid { p_max: Option<usize>, h: usize },
    Fixed { p_o: usize, p_p: usize },
}

impl Default for RankStrategy {
    fn default() -> Self {
        RankStrategy::Grid { p_max: None, h: 25 }
    }
}

/// Mesh, projectors and Moran basis pool shared by both processes.
#[derive(Debug, Clone)]
pub struct PicarSetup {
    pub mesh: TriangleMesh,
    pub projector: Projector,
    pub projector_cv: Projector,
    pub pool: MoranBasis,
    pub q: SparseMatrix,
    pub seconds: f64,
}

impl PicarSetup {
    /// The mesh envelops training and validation sites alike so both
    /// projectors exist; only coordinates are used.
    pub fn build(
        train_sites: &[Point2],
        cv_sites: &[Point2],
        mesh: &MeshOptions,
        precision: PrecisionSpec,
        pool_rank: usize,
    ) -> Result<Self> {
        let start = Instant::now();
        let all: Vec<Point2> = train_sites.iter().chain(cv_sites).copied().collect();
        let tri = build_mesh(&all, mesh.mode, mesh.target_vertices, mesh.padding)?;
        let adj = adjacency(&tri);
        let m = adj.dim();
        if pool_rank >= m {
            return Err(Error::InvalidArgument(format!(
                "basis pool rank {pool_rank} needs a mesh with more than {m} vertices"
            )));
        }
        let pool = moran_basis(&adj, pool_rank)?;
        let q = build_precision(&adj, precision)?;
        let projector = build_projector(&tri, train_sites)?;
        let projector_cv = build_projector(&tri, cv_sites)?;
        Ok(Self {
            mesh: tri,
            projector,
            projector_cv,
            pool,
            q,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn design(&self, projector: &Projector, rank: usize) -> Result<TermDesign> {
        TermDesign::projected(projector.clone(), self.pool.leading(rank)?)
    }
}

/// Everything needed to run one replicate apart from the data.
#[derive(Debug, Clone)]
pub struct ReplicateOptions {
    pub family: TwoPartFamily,
    pub link: LinkFunction,
    pub mesh: MeshOptions,
    pub precision: PrecisionSpec,
    pub rank: RankStrategy,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
    pub methods: Vec<ParameterizationKind>,
    /// Retained draws used for prediction (evenly spaced).
    pub predict_draws: usize,
    pub split_seed: u64,
}

impl ReplicateOptions {
    pub fn new(family: TwoPartFamily) -> Self {
        Self {
            family,
            link: LinkFunction::Logit,
            mesh: MeshOptions::default(),
            precision: PrecisionSpec::Icar,
            rank: RankStrategy::default(),
            priors: PriorSpec::default(),
            sampler: SamplerConfig::default(),
            methods: vec![ParameterizationKind::Picar],
            predict_draws: 1000,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub kind: ParameterizationKind,
    pub report: ValidationReport,
    /// Basis construction and rank selection.
    pub setup_seconds: f64,
    /// MCMC only.
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub ranks: (usize, usize),
    pub rank_choice: Option<RankChoice>,
    pub diagnostics: ChainDiagnostics,
    pub blocks: Vec<BlockStats>,
    pub prediction: Prediction,
    pub chain: Chain,
}

impl MethodOutcome {
    pub fn total_seconds(&self) -> f64 {
        self.setup_seconds + self.fit_seconds + self.predict_seconds
    }
}

/// Diagnostics for every chain column.
pub fn chain_diagnostics(chain: &Chain) -> ChainDiagnostics {
    ChainDiagnostics::compute(
        chain
            .names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.as_str(), chain.column_at(j))),
        chain.seconds,
    )
}

fn default_p_max(m: usize) -> usize {
    (m / 4).min(250)
}

/// Validation-site maps matching a fitted parameterization.
#[derive(Debug, Clone)]
pub enum CvDesign {
    LowRank { occurrence: TermDesign, prevalence: TermDesign },
    Gold { train_sites: Vec<Point2>, sites: Vec<Point2> },
}

/// A parameterization built for the training rows, with its validation maps.
#[derive(Debug, Clone)]
pub struct MethodDesign {
    pub kind: ParameterizationKind,
    pub latent: LatentParameterization,
    pub cv: CvDesign,
    pub ranks: (usize, usize),
    pub rank_choice: Option<RankChoice>,
    pub setup_seconds: f64,
}

impl MethodDesign {
    pub fn prediction_design(&self) -> PredictionDesign<'_> {
        match &self.cv {
            CvDesign::LowRank { occurrence, prevalence } => PredictionDesign::LowRank { occurrence, prevalence },
            CvDesign::Gold { train_sites, sites } => PredictionDesign::Gold { train_sites, sites },
        }
    }
}

/// Builds parameterizations for one dataset, sharing the mesh, basis pool
/// and rank choice between the two PICAR variants.
#[derive(Debug)]
pub struct MethodBuilder<'a> {
    pub train: Dataset,
    pub cv: Dataset,
    all_sites: Vec<Point2>,
    opts: &'a ReplicateOptions,
    picar: Option<(PicarSetup, (usize, usize), Option<RankChoice>, f64)>,
}

impl<'a> MethodBuilder<'a> {
    pub fn new(data: &Dataset, opts: &'a ReplicateOptions) -> Result<Self> {
        let train = data.train();
        let cv = data.validation();
        if train.is_empty() || cv.is_empty() {
            return Err(Error::InvalidArgument("dataset needs both training and validation rows".into()));
        }
        Ok(Self {
            train,
            cv,
            all_sites: data.sites.clone(),
            opts,
            picar: None,
        })
    }

    pub fn fit_data(&self) -> Result<FitData> {
        FitData::new(self.opts.family, self.opts.link, self.train.x.clone(), self.train.z.clone())
    }

    /// Mesh, basis pool and chosen ranks, built on first use.
    pub fn picar_setup(&mut self) -> Result<(&PicarSetup, (usize, usize), Option<&RankChoice>, f64)> {
        if self.picar.is_none() {
            self.picar = Some(prepare_picar(&self.train, &self.cv, self.opts)?);
        }
        let (s, r, c, t) = self.picar.as_ref().expect("built above");
        Ok((s, *r, c.as_ref(), *t))
    }

    pub fn build(&mut self, kind: ParameterizationKind) -> Result<MethodDesign> {
        let start = Instant::now();
        match kind {
            ParameterizationKind::Picar | ParameterizationKind::PicarCorrelated => {
                let (setup, (p_o, p_p), choice, secs) = self.picar_setup()?;
                // The shared setup is timed separately; only the per-method part counts here.
                let start = Instant::now();
                let latent = LatentParameterization::picar(
                    &setup.projector,
                    &setup.pool,
                    &setup.q,
                    p_o,
                    p_p,
                    kind == ParameterizationKind::PicarCorrelated,
                )?;
                let cv = CvDesign::LowRank {
                    occurrence: setup.design(&setup.projector_cv, p_o)?,
                    prevalence: setup.design(&setup.projector_cv, p_p)?,
                };
                let rank_choice = choice.cloned();
                Ok(MethodDesign {
                    kind,
                    latent,
                    cv,
                    ranks: (p_o, p_p),
                    rank_choice,
                    setup_seconds: secs + start.elapsed().as_secs_f64(),
                })
            }
            ParameterizationKind::FrkBisquare => {
                let domain = domain_box(&self.all_sites)?;
                let basis = BisquareBasis::new(&domain);
                let latent = LatentParameterization::frk(basis.design(&self.train.sites))?;
                let d = TermDesign::Dense(basis.design(&self.cv.sites));
                let r = basis.len();
                Ok(MethodDesign {
                    kind,
                    latent,
                    cv: CvDesign::LowRank {
                        occurrence: d.clone(),
                        prevalence: d,
                    },
                    ranks: (r, r),
                    rank_choice: None,
                    setup_seconds: start.elapsed().as_secs_f64(),
                })
            }
            ParameterizationKind::GoldStandard => {
                let n = self.train.len();
                Ok(MethodDesign {
                    kind,
                    latent: LatentParameterization::gold(self.train.sites.clone()),
                    cv: CvDesign::Gold {
                        train_sites: self.train.sites.clone(),
                        sites: self.cv.sites.clone(),
                    },
                    ranks: (n, n),
                    rank_choice: None,
                    setup_seconds: start.elapsed().as_secs_f64(),
                })
            }
        }
    }
}

/// Predict at the validation rows and score against them.
pub fn evaluate(
    chain: &Chain,
    design: &MethodDesign,
    cv: &Dataset,
    opts: &ReplicateOptions,
) -> Result<(Prediction, ValidationReport, f64)> {
    let start = Instant::now();
    let prediction = predict(
        chain,
        &opts.family,
        opts.link,
        &cv.x,
        design.prediction_design(),
        opts.predict_draws,
    )?;
    let report = metrics::validation_report(&cv.z, &prediction.mean, &prediction.prob)?;
    Ok((prediction, report, start.elapsed().as_secs_f64()))
}

/// Run every requested method on one train/validate dataset.
pub fn run_replicate(data: &Dataset, opts: &ReplicateOptions) -> Result<Vec<MethodOutcome>> {
    let mut builder = MethodBuilder::new(data, opts)?;
    let fit_data = builder.fit_data()?;
    let mut out = Vec::new();
    for &kind in &opts.methods {
        let design = builder.build(kind)?;
        let chain = fit(&fit_data, &design.latent, &opts.priors, &opts.sampler, None)?;
        let (prediction, report, predict_seconds) = evaluate(&chain, &design, &builder.cv, opts)?;
        out.push(MethodOutcome {
            kind,
            report,
            setup_seconds: design.setup_seconds,
            fit_seconds: chain.seconds,
            predict_seconds,
            ranks: design.ranks,
            rank_choice: design.rank_choice,
            diagnostics: chain_diagnostics(&chain),
            blocks: chain.blocks.clone(),
            prediction,
            chain,
        });
    }
    Ok(out)
}

fn domain_box(sites: &[Point2]) -> Result<BoundingBox> {
    BoundingBox::of(sites).ok_or_else(|| Error::InvalidArgument("no sites".into()))
}

fn prepare_picar(
    train: &Dataset,
    cv: &Dataset,
    opts: &ReplicateOptions,
) -> Result<(PicarSetup, (usize, usize), Option<RankChoice>, f64)> {
    let start = Instant::now();
    let pool_rank = match opts.rank {
        RankStrategy::Grid { p_max, .. } => p_max.unwrap_or_else(|| default_p_max(opts.mesh.target_vertices)),
        RankStrategy::Fixed { p_o, p_p } => p_o.max(p_p),
    };
    let setup = PicarSetup::build(&train.sites, &cv.sites, &opts.mesh, opts.precision, pool_rank.max(1))?;
    let m = setup.mesh.num_vertices();
    let (ranks, choice) = match opts.rank {
        RankStrategy::Fixed { p_o, p_p } => ((p_o, p_p), None),
        RankStrategy::Grid { h, .. } => {
            let grid = RankGrid::new(pool_rank, h, m)?;
            let pool = spatial_design_pool(&setup.projector, &setup.pool)?;
            let c = select_ranks(&train.x, &train.z, &pool, &opts.family, &grid, opts.split_seed)?;
            ((c.p_o, c.p_p), Some(c))
        }
    };
    Ok((setup, ranks, choice, start.elapsed().as_secs_f64()))
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub family: String,
    pub method: String,
    pub rmspe_total: f64,
    pub rmspe_positive: f64,
    pub auc: f64,
    pub minutes: f64,
}

pub const SUMMARY_HEADER: [&str; 6] = ["family", "method", "rmspe_total", "rmspe_positive", "auc", "minutes"];

impl SummaryRow {
    pub fn from_outcome(family: &TwoPartFamily, o: &MethodOutcome) -> Self {
        Self {
            family: family.name().to_string(),
            method: o.kind.name().to_string(),
            rmspe_total: o.report.rmspe_total,
            rmspe_positive: o.report.rmspe_positive,
            auc: o.report.auc,
            minutes: o.total_seconds() / 60.0,
        }
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.family.clone(),
            self.method.clone(),
            self.rmspe_total.to_string(),
            self.rmspe_positive.to_string(),
            self.auc.to_string(),
            self.minutes.to_string(),
        ]
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let err = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(SUMMARY_HEADER).map_err(err)?;
    for r in rows {
        w.write_record(r.record()).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let ctx = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::parse(ctx.clone(), e.to_string()),
    })?;
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(ctx.clone(), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers != SUMMARY_HEADER {
        return Err(Error::parse(ctx, format!("expected header {}", SUMMARY_HEADER.join(","))));
    }
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|_| Error::parse(path.display().to_string(), format!("'{s}' is not a number")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        rows.push(SummaryRow {
            family: rec[0].to_string(),
            method: rec[1].to_string(),
            rmspe_total: num(&rec[2])?,
            rmspe_positive: num(&rec[3])?,
            auc: num(&rec[4])?,
            minutes: num(&rec[5])?,
        });
    }
    Ok(rows)
}

fn finite_median(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.filter(|x| x.is_finite()).collect();
    metrics::median(&v)
}

/// Medians per (family, method), in order of first appearance.
pub fn median_table(rows: &[SummaryRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&SummaryRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.family.clone(), r.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            SummaryRow {
                family: key.0.clone(),
                method: key.1.clone(),
                rmspe_total: finite_median(g.iter().map(|r| r.rmspe_total)),
                rmspe_positive: finite_median(g.iter().map(|r| r.rmspe_positive)),
                auc: finite_median(g.iter().map(|r| r.auc)),
                minutes: finite_median(g.iter().map(|r| r.minutes)),
            }
        })
        .collect()
}

/// Plot data on a regular grid: posterior mean presence probability, mean
/// prevalence linear predictor (log-intensity for counts) and the s.d. of
/// the predictive mean. Covariates are held at `x_fixed` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub sites: Vec<Point2>,
    pub prob: Vec<f64>,
    pub log_intensity: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Surface {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| Error::parse(path.display().to_string(), e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["x", "y", "mean_prob", "mean_log_intensity", "sd"]).map_err(err)?;
        for i in 0..self.sites.len() {
            w.write_record([
                self.sites[i].x.to_string(),
                self.sites[i].y.to_string(),
                self.prob[i].to_string(),
                self.log_intensity[i].to_string(),
                self.sd[i].to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Gridded surface from a PICAR chain over the mesh's data region.
#[allow(clippy::too_many_arguments)]
pub fn picar_surface(
    chain: &Chain,
    family: &TwoPartFamily,
    link: LinkFunction,
    setup: &PicarSetup,
    region: &BoundingBox,
    nx: usize,
    ny: usize,
    x_fixed: &[f64],
    max_draws: usize,
) -> Result<Surface> {
    let sites = grid_sites(nx, ny, region);
    let proj = build_projector(&setup.mesh, &sites)?;
    let d_o = setup.design(&proj, chain.layout.p_o)?;
    let d_p = setup.design(&proj, chain.layout.p_p)?;
    if x_fixed.len() != chain.layout.k_o {
        return Err(Error::DimensionMismatch(format!(
            "{} fixed covariates for a chain with {}",
            x_fixed.len(),
            chain.layout.k_o
        )));
    }
    let x = DMatrix::from_fn(sites.len(), x_fixed.len(), |_, j| x_fixed[j]);
    let pred = predict(
        chain,
        family,
        link,
        &x,
        PredictionDesign::LowRank {
            occurrence: &d_o,
            prevalence: &d_p,
        },
        max_draws,
    )?;
    Ok(Surface {
        sites,
        prob: pred.prob,
        log_intensity: pred.eta_p,
        sd: pred.sd,
    })
}

/// Column means of a covariate matrix.
pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.ncols()).map(|j| x.column(j).mean()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, r: f64) -> SummaryRow {
        SummaryRow {
            family: "mixture-poisson".into(),
            method: method.into(),
            rmspe_total: r,
            rmspe_positive: r,
            auc: 0.5,
            minutes: 1.0,
        }
    }

    #[test]
    fn medians_group_by_method() {
        let rows = vec![row("picar", 1.0), row("frk-bisquare", 5.0), row("picar", 3.0)];
        let t = median_table(&rows);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].method, "picar");
        assert_eq!(t[0].rmspe_total, 2.0);
        assert_eq!(t[1].rmspe_total, 5.0);
    }
}
