//! Moran's operator on the mesh graph, its leading eigenvectors, and the
//! reduced prior precision `M' Q M` of the basis coefficients.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::AdjacencyMatrix;
use crate::linalg;

/// A symmetric linear operator `y = A x`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xv = DMatrixView::from_slice(x, x.len(), 1);
        let out = self * xv;
        y.copy_from_slice(out.as_slice());
    }
}

/// `(I - 11'/m) N (I - 11'/m)` applied without materializing it.
#[derive(Debug, Clone, Copy)]
pub struct MoranOperator<'a> {
    adjacency: &'a AdjacencyMatrix,
}

impl<'a> MoranOperator<'a> {
    pub fn new(adjacency: &'a AdjacencyMatrix) -> Self {
        Self { adjacency }
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

impl SymmetricOperator for MoranOperator<'_> {
    fn dim(&self) -> usize {
        self.adjacency.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut xc = x.to_vec();
        center(&mut xc);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.adjacency.neighbors(i).iter().map(|&j| xc[j]).sum();
        }
        center(y);
    }
}

/// Dense Moran operator. Entry `(i, j)` is
/// `N_ij - d_i/m - d_j/m + s/m^2` with degrees `d` and total `s = 1'N1`;
/// the upper triangle is mirrored so the result is exactly symmetric.
pub fn moran_operator(adjacency: &AdjacencyMatrix) -> DMatrix<f64> {
    let m = adjacency.dim();
    let mf = m as f64;
    let deg = adjacency.degrees();
    let total: f64 = deg.iter().sum();
    let mut op = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in j..m {
            let v = adjacency.get(i, j) - deg[i] / mf - deg[j] / mf + total / (mf * mf);
            op[(i, j)] = v;
            op[(j, i)] = v;
        }
    }
    op
}

/// Moran's I of a vertex field `z`.
pub fn morans_i(adjacency: &AdjacencyMatrix, z: &[f64]) -> Result<f64> {
    let m = adjacency.dim();
    if z.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "field of length {} on a graph with {m} vertices",
            z.len()
        )));
    }
    let total = adjacency.nnz() as f64;
    if total == 0.0 {
        return Err(Error::InvalidArgument("graph has no edges".into()));
    }
    let mut zc = z.to_vec();
    center(&mut zc);
    let denom: f64 = zc.iter().map(|x| x * x).sum();
    let scale = z.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if denom <= 1e-28 * scale.max(1e-300).powi(2) * m as f64 {
        return Err(Error::ZeroVariance);
    }
    let nz = adjacency.mul_vec(&zc);
    let numer = linalg::dot(&zc, &nz);
    Ok(m as f64 / total * numer / denom)
}

/// Leading eigenvectors (as columns) with descending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct MoranBasis {
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl MoranBasis {
    pub fn new(vectors: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvector columns but {} eigenvalues",
                vectors.ncols(),
                eigenvalues.len()
            )));
        }
        Ok(Self {
            vectors,
            eigenvalues,
        })
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Number of mesh vertices.
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    /// The first `p` columns.
    pub fn leading(&self, p: usize) -> Result<MoranBasis> {
        if p > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "requested rank {p} from a basis pool of rank {}",
                self.rank()
            )));
        }
        Ok(MoranBasis {
            vectors: self.vectors.columns(0, p).into_owned(),
            eigenvalues: self.eigenvalues[..p].to_vec(),
        })
    }

    /// `M delta`, a field on the mesh vertices.
    pub fn expand(&self, delta: &[f64]) -> Vec<f64> {
        assert_eq!(delta.len(), self.rank(), "coefficient length mismatch");
        if delta.is_empty() {
            return vec![0.0; self.dim()];
        }
        linalg::mat_vec(&self.vectors, delta)
    }

    /// Plain-text format: `m p`, the eigenvalue line, then `m` rows of `p`
    /// coefficients.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.dim(), self.rank()).unwrap();
        let ev: Vec<String> = self.eigenvalues.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{}", ev.join(" ")).unwrap();
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.rank()).map(|j| self.vectors[(i, j)].to_string()).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "basis file";
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::parse(ctx, "empty file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(ctx, "bad header"))?;
        if dims.len() != 2 {
            return Err(Error::parse(ctx, "header must be 'm p'"));
        }
        let (m, p) = (dims[0], dims[1]);
        let parse_row = |line: Option<&str>, what: &str| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| Error::parse(ctx, format!("missing {what}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(ctx, format!("bad number in {what}")))?;
            if row.len() != p {
                return Err(Error::parse(ctx, format!("{what} has {} entries, expected {p}", row.len())));
            }
            Ok(row)
        };
        let eigenvalues = parse_row(lines.next(), "eigenvalue line")?;
        let mut data = Vec::with_capacity(m * p);
        for i in 0..m {
            data.extend(parse_row(lines.next(), &format!("row {i}"))?);
        }
        MoranBasis::new(DMatrix::from_row_slice(m, p, &data), eigenvalues)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub block_size: usize,
    /// Convergence threshold on `||A v - lambda v||`, relative to the largest
    /// Ritz value magnitude (floored at 1).
    pub tolerance: f64,
    pub seed: u64,
    /// Unit vectors the basis must stay orthogonal to.
    pub deflate: Vec<Vec<f64>>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            block_size: 8,
            tolerance: 1e-10,
            seed: 0x5eed_ba515,
            deflate: Vec::new(),
        }
    }
}

/// Growing orthonormal Krylov basis stored column-major.
struct Krylov {
    m: usize,
    q: Vec<f64>,
    aq: Vec<f64>,
}

impl Krylov {
    fn len(&self) -> usize {
        self.q.len() / self.m
    }

    /// Remove components along the deflation vectors and all stored columns
    /// (two passes of classical Gram-Schmidt).
    fn orthogonalize(&self, v: &mut [f64], deflate: &[Vec<f64>]) {
        for _ in 0..2 {
            for d in deflate {
                let c = linalg::dot(d, v);
                v.iter_mut().zip(d).for_each(|(x, y)| *x -= c * y);
            }
            let k = self.len();
            if k == 0 {
                continue;
            }
            let qv = DMatrixView::from_slice(&self.q, self.m, k);
            let vv = DMatrixView::from_slice(v, self.m, 1);
            let coef = qv.tr_mul(&vv);
            let proj = qv * coef;
            v.iter_mut().zip(proj.iter()).for_each(|(x, y)| *x -= y);
        }
    }
}

/// The `p` algebraically largest eigenpairs of a symmetric operator, computed
/// by block Krylov iteration with full reorthogonalization and Rayleigh-Ritz
/// extraction. Eigenvector signs are fixed so the first clearly nonzero entry
/// of each column is positive.
pub fn leading_eigenvectors(op: &impl SymmetricOperator, p: usize) -> Result<MoranBasis> {
    leading_eigenvectors_with(op, p, &EigenOptions::default())
}

pub fn leading_eigenvectors_with(
    op: &impl SymmetricOperator,
    p: usize,
    opts: &EigenOptions,
) -> Result<MoranBasis> {
    let m = op.dim();
    if p >= m {
        return Err(Error::InvalidArgument(format!(
            "rank {p} must be smaller than the operator dimension {m}"
        )));
    }
    if p == 0 {
        return MoranBasis::new(DMatrix::zeros(m, 0), Vec::new());
    }
    let max_k = m - opts.deflate.len();
    if p > max_k {
        return Err(Error::InvalidArgument(format!(
            "rank {p} exceeds the {max_k}-dimensional complement of the deflated space"
        )));
    }
    let block = opts.block_size.clamp(1, max_k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut kry = Krylov {
        m,
        q: Vec::new(),
        aq: Vec::new(),
    };
    let mut pending: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut next_check = (p + block).min(max_k);
    let mut t = DMatrix::<f64>::zeros(0, 0);

    loop {
        // Orthonormalize the pending block against everything stored.
        let mut added = 0;
        for mut v in pending.drain(..) {
            if kry.len() >= max_k {
                break;
            }
            let mut attempts = 0;
            loop {
                let before = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                kry.orthogonalize(&mut v, &opts.deflate);
                let after = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if after > 1e-8 * before.max(f64::MIN_POSITIVE) && after > 0.0 {
                    v.iter_mut().for_each(|x| *x /= after);
                    break;
                }
                // Invariant subspace reached along this direction; restart it.
                attempts += 1;
                if attempts > 20 {
                    return Err(Error::Numerical("could not extend the Krylov basis".into()));
                }
                v = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            }
            let mut av = vec![0.0; m];
            op.apply(&v, &mut av);
            kry.q.extend_from_slice(&v);
            kry.aq.extend_from_slice(&av);
            added += 1;
        }
        let k = kry.len();
        // Extend the projected matrix T = Q' A Q by the new columns.
        let mut t_new = DMatrix::zeros(k, k);
        let old = k - added;
        t_new.view_mut((0, 0), (old, old)).copy_from(&t);
        let qv = DMatrixView::from_slice(&kry.q, m, k);
        let aq_new = DMatrixView::from_slice(&kry.aq[old * m..], m, added);
        let cols = qv.tr_mul(&aq_new);
        for c in 0..added {
            for r in 0..k {
                t_new[(r, old + c)] = cols[(r, c)];
                t_new[(old + c, r)] = cols[(r, c)];
            }
        }
        // Symmetrize the new diagonal block.
        for a in old..k {
            for b in a + 1..k {
                let s = 0.5 * (t_new[(a, b)] + t_new[(b, a)]);
                t_new[(a, b)] = s;
                t_new[(b, a)] = s;
            }
        }
        t = t_new;

        if k >= next_check || k >= max_k {
            let (vals, vecs) = linalg::symmetric_eigen_desc(t.clone());
            let y = vecs.columns(0, p);
            let x = qv * y;
            let ax = DMatrixView::from_slice(&kry.aq, m, k) * y;
            let scale = vals[0].abs().max(vals[p - 1].abs()).max(1.0);
            let converged = (0..p).all(|j| {
                let r: f64 = ax
                    .column(j)
                    .iter()
                    .zip(x.column(j).iter())
                    .map(|(a, b)| (a - vals[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                r <= opts.tolerance * scale
            });
            if converged || k >= max_k {
                let mut x = x;
                for j in 0..p {
                    fix_sign(x.column_mut(j).as_mut_slice());
                }
                return MoranBasis::new(x, vals[..p].to_vec());
            }
            next_check = ((k as f64 * 1.3) as usize + block).min(max_k);
        }
        // Next block: images of the newest block.
        pending = (0..added)
            .map(|c| kry.aq[(k - added + c) * m..(k - added + c + 1) * m].to_vec())
            .collect();
    }
}

fn fix_sign(v: &mut [f64]) {
    let max = v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Leading `p` Moran eigenvectors of a mesh graph, kept orthogonal to the
/// constant vector.
pub fn moran_basis(adjacency: &AdjacencyMatrix, p: usize) -> Result<MoranBasis> {
    let m = adjacency.dim();
    let opts = EigenOptions {
        deflate: vec![vec![1.0 / (m as f64).sqrt(); m]],
        ..EigenOptions::default()
    };
    leading_eigenvectors_with(&MoranOperator::new(adjacency), p, &opts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecisionSpec {
    /// `diag(N1) - N`.
    Icar,
    /// `diag(N1) - rho N` with `rho` in (0, 1).
    Car(f64),
    Identity,
}

impl PrecisionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PrecisionSpec::Car(rho) if !(rho > 0.0 && rho < 1.0) => Err(Error::InvalidArgument(
                format!("CAR correlation must lie in (0, 1), got {rho}"),
            )),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for PrecisionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let spec = match s.as_str() {
            "icar" => PrecisionSpec::Icar,
            "identity" | "iid" => PrecisionSpec::Identity,
            other => match other.strip_prefix("car:").or_else(|| other.strip_prefix("car(")) {
                Some(rest) => {
                    let rho: f64 = rest
                        .trim_end_matches(')')
                        .parse()
                        .map_err(|_| Error::Config(format!("bad CAR correlation in '{s}'")))?;
                    PrecisionSpec::Car(rho)
                }
                None => return Err(Error::Config(format!("unknown precision '{s}'"))),
            },
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

impl std::fmt::Display for PrecisionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrecisionSpec::Icar => f.write_str("icar"),
            PrecisionSpec::Car(rho) => write!(f, "car:{rho}"),
            PrecisionSpec::Identity => f.write_str("identity"),
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[lo..hi].binary_search(&j) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.vals[k] * v[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// `S D` for a dense `D` with `n` rows.
    pub fn mul_dense(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, d.ncols());
        for c in 0..d.ncols() {
            let col = d.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..self.n {
                let mut s = 0.0;
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    s += self.vals[k] * col[self.cols[k]];
                }
                oc[i] = s;
            }
        }
        out
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        linalg::dot(v, &self.mul_vec(v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                d[(i, self.cols[k])] = self.vals[k];
            }
        }
        d
    }
}

/// Prior precision of the mesh-vertex field.
pub fn build_precision(adjacency: &AdjacencyMatrix, spec: PrecisionSpec) -> Result<SparseMatrix> {
    spec.validate()?;
    let n = adjacency.dim();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    let off = match spec {
        PrecisionSpec::Icar => 1.0,
        PrecisionSpec::Car(rho) => rho,
        PrecisionSpec::Identity => 0.0,
    };
    for i in 0..n {
        let diag = match spec {
            PrecisionSpec::Identity => 1.0,
            _ => adjacency.degree(i) as f64,
        };
        let mut row: Vec<(usize, f64)> = vec![(i, diag)];
        if off != 0.0 {
            row.extend(adjacency.neighbors(i).iter().map(|&j| (j, -off)));
        }
        row.sort_by_key(|e| e.0);
        for (j, v) in row {
            cols.push(j);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseMatrix {
        n,
        row_ptr,
        cols,
        vals,
    })
}

/// A symmetric positive-definite coefficient precision with its cached
/// Cholesky factor and log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPrecision {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_det: f64,
}

impl ReducedPrecision {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let chol = linalg::cholesky(matrix.clone()).map_err(|_| Error::NotPositiveDefinite)?;
        let log_det = linalg::log_det_from_cholesky(&chol);
        Ok(Self {
            matrix,
            chol,
            log_det,
        })
    }

    pub fn identity(p: usize) -> Self {
        Self {
            matrix: DMatrix::identity(p, p),
            chol: DMatrix::identity(p, p),
            log_det: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor.
    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `delta' P delta`.
    pub fn quad_form(&self, delta: &[f64]) -> f64 {
        linalg::quad_form_lower(&self.chol, delta)
    }

    /// Leading `q x q` block, refactored.
    pub fn leading(&self, q: usize) -> Result<Self> {
        Self::new(self.matrix.view((0, 0), (q, q)).into_owned())
    }
}

/// `M' Q M` for a basis `M` and mesh precision `Q`.
pub fn reduced_precision(basis: &MoranBasis, q: &SparseMatrix) -> Result<ReducedPrecision> {
    if basis.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows but precision is {}x{}",
            basis.dim(),
            q.dim(),
            q.dim()
        )));
    }
    let qm = q.mul_dense(basis.vectors());
    let mut p = basis.vectors().tr_mul(&qm);
    let k = p.nrows();
    for i in 0..k {
        for j in i + 1..k {
            let s = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = s;
            p[(j, i)] = s;
        }
    }
    ReducedPrecision::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn path_moran_operator_matches_dense_product() {
        let n = path3().to_dense();
        let c = DMatrix::<f64>::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        let expect = &c * &n * &c;
        let op = moran_operator(&path3());
        assert!((&op - &expect).abs().max() < 1e-15);
        let ones = DMatrix::from_element(3, 1, 1.0);
        assert!((&op * ones).abs().max() < 1e-15);
        assert_eq!(op, op.transpose());
    }

    #[test]
    fn empty_graph_operator_is_zero() {
        let n = AdjacencyMatrix::from_edges(4, &[]).unwrap();
        assert_eq!(moran_operator(&n), DMatrix::zeros(4, 4));
    }

    #[test]
    fn diagonal_leading_pairs() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let b = leading_eigenvectors(&d, 2).unwrap();
        assert!((b.eigenvalues()[0] - 3.0).abs() < 1e-12);
        assert!((b.eigenvalues()[1] - 2.0).abs() < 1e-12);
        assert!((b.vectors()[(0, 0)].abs() - 1.0).abs() < 1e-10);
        assert!((b.vectors()[(1, 1)].abs() - 1.0).abs() < 1e-10);
        assert!(leading_eigenvectors(&d, 3).is_err());
    }

    #[test]
    fn morans_i_two_clique() {
        let n = AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap();
        // Centered z = (1, -1): numerator 2 * (1 * -1) = -2, denominator 2,
        // scale m / 1'N1 = 2 / 2.
        let v = morans_i(&n, &[1.0, -1.0]).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        assert!(matches!(morans_i(&n, &[2.0, 2.0]), Err(Error::ZeroVariance)));
        let empty = AdjacencyMatrix::from_edges(2, &[]).unwrap();
        assert!(morans_i(&empty, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn icar_and_car_on_path() {
        let q = build_precision(&path3(), PrecisionSpec::Icar).unwrap().to_dense();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(q, expect);
        let car = build_precision(&path3(), PrecisionSpec::Car(0.9)).unwrap().to_dense();
        let n = path3().to_dense();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 1.0])) - n * 0.9;
        assert!((car - expect).abs().max() < 1e-15);
        let id = build_precision(&path3(), PrecisionSpec::Identity).unwrap().to_dense();
        assert_eq!(id, DMatrix::identity(3, 3));
        assert!(build_precision(&path3(), PrecisionSpec::Car(1.0)).is_err());
    }

    #[test]
    fn precision_spec_parsing() {
        assert_eq!("icar".parse::<PrecisionSpec>().unwrap(), PrecisionSpec::Icar);
        assert_eq!("car:0.5".parse::<PrecisionSpec>().unwrap(), PrecisionSpec::Car(0.5));
        assert_eq!("CAR(0.25)".parse::<PrecisionSpec>().unwrap(), PrecisionSpec::Car(0.25));
        assert!("car:1.5".parse::<PrecisionSpec>().is_err());
        assert!("bogus".parse::<PrecisionSpec>().is_err());
    }

    #[test]
    fn indefinite_reduced_precision_errors() {
        let err = ReducedPrecision::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap_err();
        assert_eq!(err.to_string(), "reduced precision not positive definite");
    }
}
