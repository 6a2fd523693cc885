//! Synthetic two-part data: Matérn covariances, cross-correlated latent
//! fields, covariates, observations, dataset files, and the multiresolution
//! bisquare design used by the fixed-rank comparator.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Point2};
use crate::likelihoods::{sample_observation, LinkFunction, TwoPartFamily};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    /// Smoothness; one of 0.5, 1.5, 2.5.
    pub nu: f64,
    pub phi: f64,
    pub sigma2: f64,
}

impl MaternParams {
    pub fn new(nu: f64, phi: f64, sigma2: f64) -> Result<Self> {
        let p = Self { nu, phi, sigma2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if ![0.5, 1.5, 2.5].contains(&self.nu) {
            return Err(Error::InvalidArgument(format!(
                "unsupported Matérn smoothness {} (expected 0.5, 1.5 or 2.5)",
                self.nu
            )));
        }
        if !(self.phi > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument("Matérn range and sill must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form half-integer Matérn covariance at distance `h`.
pub fn matern_cov(h: f64, p: &MaternParams) -> Result<f64> {
    p.validate()?;
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be non-negative, got {h}")));
    }
    Ok(matern_unchecked(h, p))
}

#[inline]
fn matern_unchecked(h: f64, p: &MaternParams) -> f64 {
    let r = h / p.phi;
    if p.nu == 0.5 {
        p.sigma2 * (-r).exp()
    } else if p.nu == 1.5 {
        let a = 3f64.sqrt() * r;
        p.sigma2 * (1.0 + a) * (-a).exp()
    } else {
        let a = 5f64.sqrt() * r;
        p.sigma2 * (1.0 + a + a * a / 3.0) * (-a).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossGPConfig {
    pub params_o: MaternParams,
    pub params_p: MaternParams,
    pub rho: f64,
}

impl CrossGPConfig {
    pub fn validate(&self) -> Result<()> {
        self.params_o.validate()?;
        self.params_p.validate()?;
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("|rho| must not exceed 1, got {}", self.rho)));
        }
        Ok(())
    }
}

/// Nudge exact duplicates apart by `1e-9` so kernels stay nonsingular.
fn dedup_sites(sites: &[Point2]) -> Vec<Point2> {
    let mut seen: HashMap<(u64, u64), usize> = HashMap::new();
    sites
        .iter()
        .map(|p| {
            let key = (p.x.to_bits(), p.y.to_bits());
            let count = seen.entry(key).or_insert(0);
            let shifted = Point2::new(p.x + 1e-9 * *count as f64, p.y);
            *count += 1;
            shifted
        })
        .collect()
}

/// Dense covariance matrix of a Matérn field at `sites`.
pub fn covariance_matrix(sites: &[Point2], p: &MaternParams) -> Result<DMatrix<f64>> {
    p.validate()?;
    let s = dedup_sites(sites);
    let n = s.len();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = p.sigma2;
        for i in j + 1..n {
            let v = matern_unchecked(s[i].dist(&s[j]), p);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

fn matern_factor(sites: &[Point2], p: &MaternParams) -> Result<DMatrix<f64>> {
    linalg::cholesky_with_jitter(&covariance_matrix(sites, p)?, 1e-8)
}

/// Cross-correlated fields `W_o = L_o z1`, `W_p = L_p (rho z1 + sqrt(1 - rho^2) z2)`.
pub fn sample_cross_fields(
    sites: &[Point2],
    cfg: &CrossGPConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    sample_cross_fields_with(sites, cfg, &mut rng::stream(seed, 0))
}

pub fn sample_cross_fields_with<R: Rng + ?Sized>(
    sites: &[Point2],
    cfg: &CrossGPConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let n = sites.len();
    let l_o = matern_factor(sites, &cfg.params_o)?;
    let l_p = if cfg.params_p == cfg.params_o {
        l_o.clone()
    } else {
        matern_factor(sites, &cfg.params_p)?
    };
    let z1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let z2: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let s = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| cfg.rho * a + s * b).collect();
    Ok((linalg::lower_mul_vec(&l_o, &z1), linalg::lower_mul_vec(&l_p, &mix)))
}

/// In-place 2-D FFT of a row-major `rows x cols` array.
fn fft2(data: &mut [Complex64], rows: usize, cols: usize, planner: &mut FftPlanner<f64>) {
    let row_fft = planner.plan_fft_forward(cols);
    for r in data.chunks_exact_mut(cols) {
        row_fft.process(r);
    }
    let col_fft = planner.plan_fft_forward(rows);
    let mut buf = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            buf[r] = data[r * cols + c];
        }
        col_fft.process(&mut buf);
        for r in 0..rows {
            data[r * cols + c] = buf[r];
        }
    }
}

/// Eigenvalues of the circulant embedding on a `my x mx` torus.
fn embedding_eigenvalues(
    mx: usize,
    my: usize,
    hx: f64,
    hy: f64,
    p: &MaternParams,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let mut base: Vec<Complex64> = (0..my * mx)
        .map(|k| {
            let (r, c) = (k / mx, k % mx);
            let dx = c.min(mx - c) as f64 * hx;
            let dy = r.min(my - r) as f64 * hy;
            Complex64::new(matern_unchecked((dx * dx + dy * dy).sqrt(), p), 0.0)
        })
        .collect();
    fft2(&mut base, my, mx, planner);
    base.iter().map(|v| v.re).collect()
}

/// Cross-correlated fields on a regular `nx x ny` grid over `bbox` (row-major,
/// x fastest) by circulant embedding. Exact up to clipping of tiny negative
/// embedding eigenvalues. When the two Matérn parameter sets coincide the
/// joint covariance is identical to the Cholesky construction.
pub fn sample_grid_fields<R: Rng + ?Sized>(
    nx: usize,
    ny: usize,
    bbox: &BoundingBox,
    cfg: &CrossGPConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per side".into()));
    }
    let hx = bbox.width() / (nx - 1) as f64;
    let hy = bbox.height() / (ny - 1) as f64;
    let mut planner = FftPlanner::new();
    let mut mx = 2 * nx;
    let mut my = 2 * ny;
    let (lam_o, lam_p) = loop {
        let lo = embedding_eigenvalues(mx, my, hx, hy, &cfg.params_o, &mut planner);
        let lp = if cfg.params_p == cfg.params_o {
            lo.clone()
        } else {
            embedding_eigenvalues(mx, my, hx, hy, &cfg.params_p, &mut planner)
        };
        let worst = |l: &[f64]| {
            let max = l.iter().cloned().fold(0.0, f64::max);
            l.iter().cloned().fold(0.0, f64::min) / max
        };
        if worst(&lo).min(worst(&lp)) > -1e-6 || mx >= 16 * nx {
            break (lo, lp);
        }
        mx *= 2;
        my *= 2;
    };
    let total = (mx * my) as f64;
    let s = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let mut yo = Vec::with_capacity(mx * my);
    let mut yp = Vec::with_capacity(mx * my);
    for k in 0..mx * my {
        let e1 = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let e2 = Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        yo.push(e1 * (lam_o[k].max(0.0) / total).sqrt());
        yp.push((e1 * cfg.rho + e2 * s) * (lam_p[k].max(0.0) / total).sqrt());
    }
    fft2(&mut yo, my, mx, &mut planner);
    fft2(&mut yp, my, mx, &mut planner);
    let mut wo = Vec::with_capacity(nx * ny);
    let mut wp = Vec::with_capacity(nx * ny);
    for r in 0..ny {
        for c in 0..nx {
            wo.push(yo[r * mx + c].re);
            wp.push(yp[r * mx + c].re);
        }
    }
    Ok((wo, wp))
}

/// Grid sites in row-major order, x fastest.
pub fn grid_sites(nx: usize, ny: usize, bbox: &BoundingBox) -> Vec<Point2> {
    let hx = bbox.width() / (nx.max(2) - 1) as f64;
    let hy = bbox.height() / (ny.max(2) - 1) as f64;
    (0..ny)
        .flat_map(|r| (0..nx).map(move |c| Point2::new(bbox.min.x + c as f64 * hx, bbox.min.y + r as f64 * hy)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateDesign {
    /// Independent N(0, sd^2) columns.
    Normal { sd: f64 },
    /// Independent U(0, 1) columns.
    Uniform,
}

impl std::str::FromStr for CovariateDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "normal" || t == "standard-normal" {
            return Ok(CovariateDesign::Normal { sd: 1.0 });
        }
        if t == "uniform" {
            return Ok(CovariateDesign::Uniform);
        }
        if let Some(v) = t.strip_prefix("normal:") {
            let sd: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad covariate sd '{v}'")))?;
            if sd > 0.0 {
                return Ok(CovariateDesign::Normal { sd });
            }
        }
        Err(Error::Config(format!("unknown covariate design '{s}'")))
    }
}

impl std::fmt::Display for CovariateDesign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovariateDesign::Normal { sd } if *sd == 1.0 => f.write_str("normal"),
            CovariateDesign::Normal { sd } => write!(f, "normal:{sd}"),
            CovariateDesign::Uniform => f.write_str("uniform"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SiteDesign {
    /// Independent uniform sites on the unit square.
    UniformSquare,
    /// Regular grid on the unit square.
    Grid { nx: usize, ny: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub n_cv: usize,
    pub cross: CrossGPConfig,
    pub beta_o: Vec<f64>,
    pub beta_p: Vec<f64>,
    /// Prevalence variance of the semi-continuous families.
    pub nugget: f64,
    pub covariates: CovariateDesign,
    pub sites: SiteDesign,
    pub link: LinkFunction,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let m = MaternParams {
            nu: 0.5,
            phi: 0.2,
            sigma2: 1.0,
        };
        Self {
            n: 1000,
            n_cv: 400,
            cross: CrossGPConfig {
                params_o: m,
                params_p: m,
                rho: 0.7,
            },
            beta_o: vec![1.0, 1.0],
            beta_p: vec![1.0, 1.0],
            nugget: 0.1,
            covariates: CovariateDesign::Normal { sd: 1.0 },
            sites: SiteDesign::UniformSquare,
            link: LinkFunction::Logit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validate,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validate => "validate",
        }
    }
}

/// Observed data: sites, covariates, responses and the train/validate split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sites: Vec<Point2>,
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            sites: rows.iter().map(|&i| self.sites[i]).collect(),
            x: self.x.select_rows(rows.iter()),
            z: rows.iter().map(|&i| self.z[i]).collect(),
            split: rows.iter().map(|&i| self.split[i]).collect(),
        }
    }

    pub fn train(&self) -> Dataset {
        self.subset(&self.indices(Split::Train))
    }

    pub fn validation(&self) -> Dataset {
        self.subset(&self.indices(Split::Validate))
    }

    /// Prepend a column of ones.
    pub fn with_intercept(&self) -> Dataset {
        let n = self.len();
        let k = self.x.ncols();
        let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { self.x[(i, j - 1)] });
        Dataset { x, ..self.clone() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["x_coord".to_string(), "y_coord".into(), "z".into()];
        header.extend((1..=self.x.ncols()).map(|j| format!("x{j}")));
        header.push("split".into());
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for i in 0..self.len() {
            let mut rec = vec![
                self.sites[i].x.to_string(),
                self.sites[i].y.to_string(),
                self.z[i].to_string(),
            ];
            rec.extend((0..self.x.ncols()).map(|j| self.x[(i, j)].to_string()));
            rec.push(self.split[i].as_str().into());
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(path.display().to_string(), format!("missing column '{name}'")))
        };
        let (cx, cy, cz) = (col("x_coord")?, col("y_coord")?, col("z")?);
        let csplit = header.iter().position(|h| h == "split");
        let cov_cols: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.len() > 1 && h.starts_with('x') && h[1..].chars().all(|c| c.is_ascii_digit()))
            .map(|(i, _)| i)
            .collect();
        let mut sites = Vec::new();
        let mut z = Vec::new();
        let mut xs = Vec::new();
        let mut split = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let ctx = || format!("{}:{}", path.display(), line + 2);
            let num = |i: usize| -> Result<f64> {
                let s = rec.get(i).unwrap_or("").trim();
                s.parse::<f64>()
                    .map_err(|_| Error::parse(ctx(), format!("'{s}' is not a number")))
            };
            sites.push(Point2::new(num(cx)?, num(cy)?));
            z.push(num(cz)?);
            for &c in &cov_cols {
                xs.push(num(c)?);
            }
            split.push(match csplit.map(|c| rec.get(c).unwrap_or("").trim()) {
                None | Some("train") => Split::Train,
                Some("validate") => Split::Validate,
                Some(other) => return Err(Error::parse(ctx(), format!("unknown split '{other}'"))),
            });
        }
        let n = z.len();
        let x = DMatrix::from_row_slice(n, cov_cols.len(), &xs);
        Ok(Dataset { sites, x, z, split })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::parse(path.display().to_string(), e.to_string())
    }
}

/// A simulated dataset together with the latent truth that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub data: Dataset,
    pub family: TwoPartFamily,
    pub w_o: Vec<f64>,
    pub w_p: Vec<f64>,
    pub occurrence: Vec<bool>,
    pub seed: u64,
    /// Every generator setting, in a stable order.
    pub metadata: Vec<(String, String)>,
}

impl SyntheticDataset {
    pub fn metadata_text(&self) -> String {
        self.metadata
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        self.data.write_csv(csv_path)?;
        let meta = csv_path.with_extension("meta");
        std::fs::write(&meta, self.metadata_text()).map_err(|e| Error::io(&meta, e))
    }
}

fn draw_covariates<R: Rng + ?Sized>(design: CovariateDesign, n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            x[(i, j)] = match design {
                CovariateDesign::Normal { sd } => sd * Distribution::<f64>::sample(&StandardNormal, rng),
                CovariateDesign::Uniform => rng.random::<f64>(),
            };
        }
    }
    x
}

/// Simulate one replicate of the two-part generative process.
pub fn generate_dataset(family: &TwoPartFamily, cfg: &SimulationConfig, seed: u64) -> Result<SyntheticDataset> {
    cfg.cross.validate()?;
    if cfg.beta_o.len() != cfg.beta_p.len() {
        return Err(Error::InvalidArgument("occurrence and prevalence coefficients differ in length".into()));
    }
    if family.is_semicontinuous() && !(cfg.nugget > 0.0) {
        return Err(Error::InvalidArgument("semi-continuous families need a positive nugget".into()));
    }
    let k = cfg.beta_o.len();
    let unit = BoundingBox {
        min: Point2::new(0.0, 0.0),
        max: Point2::new(1.0, 1.0),
    };
    let (sites, w_o, w_p, total) = match cfg.sites {
        SiteDesign::UniformSquare => {
            let total = cfg.n + cfg.n_cv;
            let mut r = rng::stream(seed, 0);
            let sites: Vec<Point2> = (0..total).map(|_| Point2::new(r.random(), r.random())).collect();
            let (wo, wp) = sample_cross_fields_with(&sites, &cfg.cross, &mut rng::stream(seed, 2))?;
            (sites, wo, wp, total)
        }
        SiteDesign::Grid { nx, ny } => {
            let total = nx * ny;
            if cfg.n + cfg.n_cv != total {
                return Err(Error::InvalidArgument(format!(
                    "grid has {total} sites but n + n_cv = {}",
                    cfg.n + cfg.n_cv
                )));
            }
            let sites = grid_sites(nx, ny, &unit);
            let (wo, wp) = sample_grid_fields(nx, ny, &unit, &cfg.cross, &mut rng::stream(seed, 2))?;
            (sites, wo, wp, total)
        }
    };
    let x = draw_covariates(cfg.covariates, total, k, &mut rng::stream(seed, 1));
    let xb_o = linalg::mat_vec(&x, &cfg.beta_o);
    let xb_p = linalg::mat_vec(&x, &cfg.beta_p);
    let mut r = rng::stream(seed, 3);
    let mut z = Vec::with_capacity(total);
    let mut occurrence = Vec::with_capacity(total);
    for i in 0..total {
        let pi = cfg.link.inverse(xb_o[i] + w_o[i]);
        let param = family.prevalence_param(xb_p[i] + w_p[i]);
        let (o, v) = sample_observation(family, pi, param, cfg.nugget, &mut r);
        occurrence.push(o);
        z.push(v);
    }
    let mut split = vec![Split::Train; total];
    match cfg.sites {
        SiteDesign::UniformSquare => split[cfg.n..].iter_mut().for_each(|s| *s = Split::Validate),
        SiteDesign::Grid { .. } => {
            let mut order: Vec<usize> = (0..total).collect();
            order.shuffle(&mut rng::stream(seed, 4));
            for &i in &order[..cfg.n_cv] {
                split[i] = Split::Validate;
            }
        }
    }
    let fmt_vec = |v: &[f64]| v.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" ");
    let site_design = match cfg.sites {
        SiteDesign::UniformSquare => "uniform-unit-square".to_string(),
        SiteDesign::Grid { nx, ny } => format!("grid:{nx}x{ny}"),
    };
    let metadata = vec![
        ("family".into(), family.to_string()),
        ("seed".into(), seed.to_string()),
        ("n".into(), cfg.n.to_string()),
        ("n_cv".into(), cfg.n_cv.to_string()),
        ("sites".into(), site_design),
        ("covariates".into(), cfg.covariates.to_string()),
        ("beta_o".into(), fmt_vec(&cfg.beta_o)),
        ("beta_p".into(), fmt_vec(&cfg.beta_p)),
        ("nu_o".into(), cfg.cross.params_o.nu.to_string()),
        ("phi_o".into(), cfg.cross.params_o.phi.to_string()),
        ("sigma2_o".into(), cfg.cross.params_o.sigma2.to_string()),
        ("nu_p".into(), cfg.cross.params_p.nu.to_string()),
        ("phi_p".into(), cfg.cross.params_p.phi.to_string()),
        ("sigma2_p".into(), cfg.cross.params_p.sigma2.to_string()),
        ("rho".into(), cfg.cross.rho.to_string()),
        ("nugget".into(), if family.is_semicontinuous() { cfg.nugget.to_string() } else { "none".into() }),
        ("tobit_threshold".into(), family.tobit_threshold.to_string()),
        ("link".into(), cfg.link.to_string()),
        ("semicontinuous_mean".into(), "identity".into()),
    ];
    Ok(SyntheticDataset {
        data: Dataset { sites, x, z, split },
        family: *family,
        w_o,
        w_p,
        occurrence,
        seed,
        metadata,
    })
}

/// Bisquare function `(1 - (d / omega)^2)^2` inside the aperture, 0 outside.
#[inline]
pub fn bisquare(d: f64, omega: f64) -> f64 {
    if d < omega {
        let r = d / omega;
        (1.0 - r * r).powi(2)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisquareKnot {
    pub center: Point2,
    pub omega: f64,
    pub level: usize,
}

/// Three-level quad-tree of bisquare functions (2x2, 4x4, 8x8 knots).
#[derive(Debug, Clone, PartialEq)]
pub struct BisquareBasis {
    pub knots: Vec<BisquareKnot>,
}

/// Knot grids are expanded this fraction beyond the domain box on every side.
pub const KNOT_EXPANSION: f64 = 0.15;

impl BisquareBasis {
    pub fn new(domain: &BoundingBox) -> Self {
        let b = domain.expanded(KNOT_EXPANSION);
        let mut knots = Vec::with_capacity(84);
        for (level, g) in [2usize, 4, 8].into_iter().enumerate() {
            let dx = b.width() / g as f64;
            let dy = b.height() / g as f64;
            let omega = 1.5 * dx.min(dy);
            for r in 0..g {
                for c in 0..g {
                    knots.push(BisquareKnot {
                        center: Point2::new(b.min.x + (c as f64 + 0.5) * dx, b.min.y + (r as f64 + 0.5) * dy),
                        omega,
                        level,
                    });
                }
            }
        }
        Self { knots }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// `n x 84` design matrix at `sites`, columns ordered coarse to fine.
    pub fn design(&self, sites: &[Point2]) -> DMatrix<f64> {
        DMatrix::from_fn(sites.len(), self.knots.len(), |i, j| {
            let k = &self.knots[j];
            bisquare(sites[i].dist(&k.center), k.omega)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisquareDesign {
    pub basis: BisquareBasis,
    pub phi: DMatrix<f64>,
}

pub fn build_bisquare_design(sites: &[Point2], domain: &BoundingBox) -> BisquareDesign {
    let basis = BisquareBasis::new(domain);
    let phi = basis.design(sites);
    BisquareDesign { basis, phi }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern_values() {
        let p = MaternParams::new(0.5, 0.2, 1.0).unwrap();
        assert_eq!(matern_cov(0.0, &p).unwrap(), 1.0);
        assert!((matern_cov(0.2, &p).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert!(MaternParams::new(1.0, 0.2, 1.0).is_err());
        for nu in [1.5, 2.5] {
            let q = MaternParams::new(nu, 0.3, 2.0).unwrap();
            assert_eq!(matern_cov(0.0, &q).unwrap(), 2.0);
            let mut prev = 2.0;
            for i in 1..50 {
                let v = matern_cov(i as f64 * 0.05, &q).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn bisquare_values() {
        assert_eq!(bisquare(0.0, 0.3), 1.0);
        assert_eq!(bisquare(0.3, 0.3), 0.0);
        assert!((bisquare(0.15, 0.3) - 0.5625).abs() < 1e-15);
        let unit = BoundingBox {
            min: Point2::new(0.0, 0.0),
            max: Point2::new(1.0, 1.0),
        };
        assert_eq!(BisquareBasis::new(&unit).len(), 84);
    }

    #[test]
    fn covariate_design_parsing() {
        assert_eq!("normal".parse::<CovariateDesign>().unwrap(), CovariateDesign::Normal { sd: 1.0 });
        assert_eq!("normal:0.5".parse::<CovariateDesign>().unwrap(), CovariateDesign::Normal { sd: 0.5 });
        assert_eq!("uniform".parse::<CovariateDesign>().unwrap(), CovariateDesign::Uniform);
        assert!("gamma".parse::<CovariateDesign>().is_err());
    }
}
