//! C ABI over the `picarz` library.
//!
//! Objects are opaque handles created by `picarz_*_new`/`_build`/`_read`
//! style calls and released with the matching `_free`. Every fallible call
//! returns a [`PicarzStatus`]; on failure the message is available from
//! [`picarz_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use picarz::geometry::{build_mesh, MeshMode, Point2, TriangleMesh, adjacency};
use picarz::inference::{fit, Chain, ParameterizationKind, SamplerConfig};
use picarz::likelihoods::TwoPartFamily;
use picarz::pipeline::{MethodBuilder, RankStrategy, ReplicateOptions};
use picarz::simulation::{generate_dataset, Dataset, SimulationConfig};
use picarz::spectral::{moran_basis, MoranBasis};
use picarz::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicarzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Config = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

impl From<&Error> for PicarzStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } | Error::Parse { .. } => PicarzStatus::Io,
            Error::Config(_) => PicarzStatus::Config,
            Error::InvalidArgument(_)
            | Error::DimensionMismatch(_)
            | Error::DegeneratePoints
            | Error::OutsideMesh { .. }
            | Error::InconsistentObservation(_)
            | Error::EmptyPrevalence => PicarzStatus::InvalidArgument,
            _ => PicarzStatus::Numerical,
        }
    }
}

/// Mesh construction mode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicarzMeshMode {
    RegularLattice = 0,
    Delaunay = 1,
}

/// Opaque dataset handle.
pub struct PicarzDataset(Dataset);

/// Opaque triangular mesh handle.
pub struct PicarzMesh(TriangleMesh);

/// Opaque Moran basis handle.
pub struct PicarzBasis(MoranBasis);

/// Opaque posterior chain handle.
pub struct PicarzChain(Chain);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), PicarzFailure>) -> PicarzStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PicarzStatus::Ok,
        Ok(Err(PicarzFailure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside picarz".into());
            PicarzStatus::Panic
        }
    }
}

struct PicarzFailure(PicarzStatus, String);

impl From<Error> for PicarzFailure {
    fn from(e: Error) -> Self {
        PicarzFailure(PicarzStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> PicarzFailure {
    PicarzFailure(PicarzStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> PicarzFailure {
    PicarzFailure(PicarzStatus::InvalidArgument, msg.into())
}

/// # Safety
/// `s` must be null or a valid nul-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, PicarzFailure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| bad(format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `p` must be null or valid for reads of `n` values.
unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], PicarzFailure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn put<T>(out: *mut *mut T, value: T) -> Result<(), PicarzFailure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next `picarz_*` call on the same thread.
#[no_mangle]
pub extern "C" fn picarz_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn picarz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Simulate one replicate with the reference design, changing only the
/// sizes. `family` is e.g. `"mixture-poisson"` or `"hurdle-count"`.
///
/// # Safety
/// `family` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn picarz_dataset_simulate(
    family: *const c_char,
    n: usize,
    n_cv: usize,
    seed: u64,
    out: *mut *mut PicarzDataset,
) -> PicarzStatus {
    guard(|| {
        let fam: TwoPartFamily = text(family, "family")?.parse()?;
        let cfg = SimulationConfig {
            n,
            n_cv,
            ..SimulationConfig::default()
        };
        let ds = generate_dataset(&fam, &cfg, seed)?;
        put(out, PicarzDataset(ds.data))
    })
}

/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn picarz_dataset_read_csv(path: *const c_char, out: *mut *mut PicarzDataset) -> PicarzStatus {
    guard(|| {
        let p = PathBuf::from(text(path, "path")?);
        put(out, PicarzDataset(Dataset::read_csv(&p)?))
    })
}

/// # Safety
/// `ds` must be a live dataset handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn picarz_dataset_write_csv(ds: *const PicarzDataset, path: *const c_char) -> PicarzStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let p = PathBuf::from(text(path, "path")?);
        Ok(ds.0.write_csv(&p)?)
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_dataset_len(ds: *const PicarzDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn picarz_dataset_free(ds: *mut PicarzDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Mesh enveloping the `n` locations `(xs[i], ys[i])`.
///
/// # Safety
/// `xs` and `ys` must hold `n` values each and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn picarz_mesh_build(
    xs: *const f64,
    ys: *const f64,
    n: usize,
    mode: PicarzMeshMode,
    target_vertices: usize,
    padding: f64,
    out: *mut *mut PicarzMesh,
) -> PicarzStatus {
    guard(|| {
        let xs = slice(xs, n, "xs")?;
        let ys = slice(ys, n, "ys")?;
        let pts: Vec<Point2> = xs.iter().zip(ys).map(|(&x, &y)| Point2 { x, y }).collect();
        let mode = match mode {
            PicarzMeshMode::RegularLattice => MeshMode::RegularLattice,
            PicarzMeshMode::Delaunay => MeshMode::Delaunay,
        };
        put(out, PicarzMesh(build_mesh(&pts, mode, target_vertices, padding)?))
    })
}

/// # Safety
/// `mesh` must be null or a live mesh handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_mesh_num_vertices(mesh: *const PicarzMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.num_vertices())
}

/// # Safety
/// `mesh` must be null or a live mesh handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_mesh_num_triangles(mesh: *const PicarzMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.num_triangles())
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn picarz_mesh_free(mesh: *mut PicarzMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Leading `p` Moran eigenvectors of the mesh graph.
///
/// # Safety
/// `mesh` must be a live mesh handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn picarz_basis_moran(mesh: *const PicarzMesh, p: usize, out: *mut *mut PicarzBasis) -> PicarzStatus {
    guard(|| {
        let mesh = mesh.as_ref().ok_or_else(|| null("mesh"))?;
        put(out, PicarzBasis(moran_basis(&adjacency(&mesh.0), p)?))
    })
}

/// # Safety
/// `basis` must be null or a live basis handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_basis_rank(basis: *const PicarzBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.rank())
}

/// # Safety
/// `basis` must be null or a live basis handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_basis_dim(basis: *const PicarzBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.dim())
}

/// Copy eigenvalues (descending) into `buf`, which must hold `rank` values.
///
/// # Safety
/// `basis` must be a live handle and `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn picarz_basis_eigenvalues(basis: *const PicarzBasis, buf: *mut f64, len: usize) -> PicarzStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        copy_out(b.0.eigenvalues(), buf, len)
    })
}

/// Copy the `dim x rank` eigenvector matrix, column-major.
///
/// # Safety
/// `basis` must be a live handle and `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn picarz_basis_vectors(basis: *const PicarzBasis, buf: *mut f64, len: usize) -> PicarzStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        copy_out(b.0.vectors().as_slice(), buf, len)
    })
}

/// # Safety
/// `basis` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn picarz_basis_free(basis: *mut PicarzBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), PicarzFailure> {
    if len < src.len() {
        return Err(PicarzFailure(
            PicarzStatus::BufferTooSmall,
            format!("buffer holds {len} values, need {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Fit one parameterization to the training rows of `ds`. `method` is e.g.
/// `"picar"`; `p_o = p_p = 0` selects ranks with the heuristic.
///
/// # Safety
/// `ds` must be a live handle, strings nul-terminated, `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn picarz_fit(
    ds: *const PicarzDataset,
    family: *const c_char,
    method: *const c_char,
    target_vertices: usize,
    p_o: usize,
    p_p: usize,
    iterations: usize,
    burn_in: usize,
    seed: u64,
    out: *mut *mut PicarzChain,
) -> PicarzStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let fam: TwoPartFamily = text(family, "family")?.parse()?;
        let kind: ParameterizationKind = text(method, "method")?.parse()?;
        let mut opts = ReplicateOptions::new(fam);
        opts.mesh.target_vertices = target_vertices;
        opts.methods = vec![kind];
        opts.rank = match (p_o, p_p) {
            (0, 0) => RankStrategy::default(),
            (0, _) | (_, 0) => return Err(bad("p_o and p_p must both be zero or both positive")),
            (p_o, p_p) => RankStrategy::Fixed { p_o, p_p },
        };
        opts.sampler = SamplerConfig {
            iterations,
            burn_in,
            seed,
            ..SamplerConfig::default()
        };
        let mut b = MethodBuilder::new(&ds.0, &opts)?;
        let data = b.fit_data()?;
        let design = b.build(kind)?;
        let chain = fit(&data, &design.latent, &opts.priors, &opts.sampler, None)?;
        put(out, PicarzChain(chain))
    })
}

/// Retained draws, or 0 for a null handle.
///
/// # Safety
/// `chain` must be null or a live chain handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_chain_len(chain: *const PicarzChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.len())
}

/// Number of scalar columns per draw.
///
/// # Safety
/// `chain` must be null or a live chain handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_chain_width(chain: *const PicarzChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.width())
}

/// Wall-clock seconds spent sampling.
///
/// # Safety
/// `chain` must be null or a live chain handle.
#[no_mangle]
pub unsafe extern "C" fn picarz_chain_seconds(chain: *const PicarzChain) -> f64 {
    chain.as_ref().map_or(f64::NAN, |c| c.0.seconds)
}

/// Copy the draws of column `name` (e.g. `"beta_o_1"`) into `buf`.
///
/// # Safety
/// `chain` must be a live handle, `name` nul-terminated, `buf` writable for
/// `len` values.
#[no_mangle]
pub unsafe extern "C" fn picarz_chain_column(
    chain: *const PicarzChain,
    name: *const c_char,
    buf: *mut f64,
    len: usize,
) -> PicarzStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(|| null("chain"))?;
        let name = text(name, "name")?;
        let col = c.0.column(name).ok_or_else(|| bad(format!("no column named '{name}'")))?;
        copy_out(&col, buf, len)
    })
}

/// # Safety
/// `chain` must be a live handle and `path` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn picarz_chain_write_csv(chain: *const PicarzChain, path: *const c_char) -> PicarzStatus {
    guard(|| {
        let c = chain.as_ref().ok_or_else(|| null("chain"))?;
        Ok(c.0.write_csv(&PathBuf::from(text(path, "path")?))?)
    })
}

/// # Safety
/// `chain` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn picarz_chain_free(chain: *mut PicarzChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Root mean squared prediction error of two length-`n` arrays.
///
/// # Safety
/// `truth` and `pred` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn picarz_rmspe(truth: *const f64, pred: *const f64, n: usize, out: *mut f64) -> PicarzStatus {
    guard(|| {
        let v = picarz::metrics::rmspe(slice(truth, n, "truth")?, slice(pred, n, "pred")?)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = v;
        Ok(())
    })
}

/// Mann-Whitney AUC; `labels[i] != 0` marks a positive.
///
/// # Safety
/// `labels` and `scores` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn picarz_auc(labels: *const u8, scores: *const f64, n: usize, out: *mut f64) -> PicarzStatus {
    guard(|| {
        if n > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        let l: Vec<bool> = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(labels, n).iter().map(|&b| b != 0).collect()
        };
        let v = picarz::metrics::auc(&l, slice(scores, n, "scores")?)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = v;
        Ok(())
    })
}
