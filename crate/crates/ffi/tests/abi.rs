use std::ffi::{CStr, CString};
use std::ptr;

use picarz_ffi::*;

fn last_error() -> String {
    let p = picarz_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn simulate(n: usize, n_cv: usize, seed: u64) -> *mut PicarzDataset {
    let fam = CString::new("mixture-poisson").unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe { picarz_dataset_simulate(fam.as_ptr(), n, n_cv, seed, &mut ds) };
    assert_eq!(st, PicarzStatus::Ok);
    ds
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(picarz_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_handles_are_reported() {
    let mut out = ptr::null_mut();
    let st = unsafe { picarz_dataset_simulate(ptr::null(), 10, 5, 1, &mut out) };
    assert_eq!(st, PicarzStatus::NullPointer);
    assert!(last_error().contains("family"));
    assert!(out.is_null());
    unsafe {
        assert_eq!(picarz_dataset_len(ptr::null()), 0);
        assert_eq!(picarz_mesh_num_vertices(ptr::null()), 0);
        assert_eq!(picarz_chain_len(ptr::null()), 0);
        picarz_dataset_free(ptr::null_mut());
        picarz_mesh_free(ptr::null_mut());
        picarz_basis_free(ptr::null_mut());
        picarz_chain_free(ptr::null_mut());
    }
}

#[test]
fn unknown_family_is_invalid_argument() {
    let fam = CString::new("negative-binomial").unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { picarz_dataset_simulate(fam.as_ptr(), 10, 5, 1, &mut out) };
    assert_ne!(st, PicarzStatus::Ok);
    assert!(!last_error().is_empty());
}

#[test]
fn success_clears_last_error() {
    let mut out = ptr::null_mut();
    unsafe { picarz_dataset_simulate(ptr::null(), 10, 5, 1, &mut out) };
    let ds = simulate(30, 10, 2);
    assert!(picarz_last_error_message().is_null());
    unsafe { picarz_dataset_free(ds) };
}

#[test]
fn dataset_round_trips_through_csv() {
    let ds = simulate(40, 10, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("d.csv").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(picarz_dataset_len(ds), 50);
        assert_eq!(picarz_dataset_write_csv(ds, path.as_ptr()), PicarzStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(picarz_dataset_read_csv(path.as_ptr(), &mut back), PicarzStatus::Ok);
        assert_eq!(picarz_dataset_len(back), 50);
        picarz_dataset_free(back);
        picarz_dataset_free(ds);
    }
}

#[test]
fn missing_file_is_io_error() {
    let path = CString::new("/nonexistent/picarz/x.csv").unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { picarz_dataset_read_csv(path.as_ptr(), &mut out) };
    assert_eq!(st, PicarzStatus::Io);
}

#[test]
fn mesh_and_basis() {
    let xs: Vec<f64> = (0..30).map(|i| (i % 6) as f64 / 5.0).collect();
    let ys: Vec<f64> = (0..30).map(|i| (i / 6) as f64 / 4.0).collect();
    let mut mesh = ptr::null_mut();
    unsafe {
        let st = picarz_mesh_build(xs.as_ptr(), ys.as_ptr(), 30, PicarzMeshMode::RegularLattice, 100, 0.1, &mut mesh);
        assert_eq!(st, PicarzStatus::Ok);
        let m = picarz_mesh_num_vertices(mesh);
        assert!(m >= 30, "{m}");
        assert!(picarz_mesh_num_triangles(mesh) > 0);

        let mut basis = ptr::null_mut();
        assert_eq!(picarz_basis_moran(mesh, 5, &mut basis), PicarzStatus::Ok);
        assert_eq!(picarz_basis_rank(basis), 5);
        assert_eq!(picarz_basis_dim(basis), m);

        let mut small = [0.0; 4];
        assert_eq!(
            picarz_basis_eigenvalues(basis, small.as_mut_ptr(), small.len()),
            PicarzStatus::BufferTooSmall
        );
        let mut ev = [0.0; 5];
        assert_eq!(picarz_basis_eigenvalues(basis, ev.as_mut_ptr(), 5), PicarzStatus::Ok);
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));

        let mut vecs = vec![0.0; m * 5];
        assert_eq!(picarz_basis_vectors(basis, vecs.as_mut_ptr(), vecs.len()), PicarzStatus::Ok);
        let norm: f64 = vecs[..m].iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-8);

        picarz_basis_free(basis);
        picarz_mesh_free(mesh);
    }
}

#[test]
fn degenerate_mesh_input_fails() {
    let xs = [0.0, 1.0, 2.0];
    let ys = [0.0, 1.0, 2.0];
    let mut mesh = ptr::null_mut();
    let st = unsafe {
        picarz_mesh_build(xs.as_ptr(), ys.as_ptr(), 3, PicarzMeshMode::Delaunay, 50, 0.1, &mut mesh)
    };
    assert_eq!(st, PicarzStatus::InvalidArgument);
    assert!(mesh.is_null());
}

#[test]
fn fit_produces_chain() {
    let ds = simulate(120, 30, 4);
    let fam = CString::new("mixture-poisson").unwrap();
    let method = CString::new("picar").unwrap();
    let mut chain = ptr::null_mut();
    unsafe {
        let st = picarz_fit(ds, fam.as_ptr(), method.as_ptr(), 150, 4, 4, 400, 200, 7, &mut chain);
        assert_eq!(st, PicarzStatus::Ok, "{}", last_error());
        assert_eq!(picarz_chain_len(chain), 200);
        assert!(picarz_chain_width(chain) > 8);
        assert!(picarz_chain_seconds(chain) >= 0.0);

        let name = CString::new("beta_o_1").unwrap();
        let mut col = vec![0.0; 200];
        assert_eq!(picarz_chain_column(chain, name.as_ptr(), col.as_mut_ptr(), 200), PicarzStatus::Ok);
        assert!(col.iter().all(|v| v.is_finite()));

        let bogus = CString::new("nope").unwrap();
        assert_eq!(
            picarz_chain_column(chain, bogus.as_ptr(), col.as_mut_ptr(), 200),
            PicarzStatus::InvalidArgument
        );

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("c.csv").to_str().unwrap()).unwrap();
        assert_eq!(picarz_chain_write_csv(chain, path.as_ptr()), PicarzStatus::Ok);
        picarz_chain_free(chain);
        picarz_dataset_free(ds);
    }
}

#[test]
fn mismatched_ranks_rejected() {
    let ds = simulate(60, 10, 5);
    let fam = CString::new("mixture-poisson").unwrap();
    let method = CString::new("picar").unwrap();
    let mut chain = ptr::null_mut();
    let st = unsafe { picarz_fit(ds, fam.as_ptr(), method.as_ptr(), 100, 3, 0, 100, 50, 1, &mut chain) };
    assert_eq!(st, PicarzStatus::InvalidArgument);
    unsafe { picarz_dataset_free(ds) };
}

#[test]
fn metric_helpers() {
    let t = [1.0, 2.0, 3.0];
    let p = [1.0, 2.0, 5.0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(picarz_rmspe(t.as_ptr(), p.as_ptr(), 3, &mut out), PicarzStatus::Ok);
        assert!((out - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let labels = [0u8, 1, 0, 1];
        let scores = [0.1, 0.9, 0.4, 0.3];
        assert_eq!(picarz_auc(labels.as_ptr(), scores.as_ptr(), 4, &mut out), PicarzStatus::Ok);
        assert!((out - 0.75).abs() < 1e-12);
        assert_eq!(picarz_rmspe(t.as_ptr(), p.as_ptr(), 3, ptr::null_mut()), PicarzStatus::NullPointer);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/picarz.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    for line in src.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
        }
    }
}
