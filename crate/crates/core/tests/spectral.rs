use nalgebra::DMatrix;
use picarz::geometry::{adjacency, build_mesh, AdjacencyMatrix, MeshMode, Point2};
use picarz::rng;
use picarz::spectral::{
    build_precision, leading_eigenvectors, moran_basis, moran_operator, morans_i, reduced_precision, MoranBasis,
    PrecisionSpec,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Cyclic Jacobi rotations; returns eigenvalues descending with vectors as columns.
fn jacobi_eigen(mut a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let vals = idx.iter().map(|&i| a[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (vals, vecs)
}

fn path3() -> AdjacencyMatrix {
    AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
}

fn mesh_graph(n: usize, target: usize, seed: u64, mode: MeshMode) -> AdjacencyMatrix {
    let mut r = rng::stream(seed, 0);
    let pts: Vec<Point2> = (0..n).map(|_| Point2::new(r.random(), r.random())).collect();
    adjacency(&build_mesh(&pts, mode, target, 0.1).unwrap())
}

fn check_basis(b: &MoranBasis, tol: f64) {
    let m = b.vectors();
    let gram = m.transpose() * m;
    let p = b.rank();
    let dev = (gram - DMatrix::<f64>::identity(p, p)).amax();
    assert!(dev <= tol, "orthonormality {dev}");
    for j in 0..p {
        assert!(m.column(j).sum().abs() <= tol, "centering col {j}");
    }
    assert!(b.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn three_path_leading_pair_matches_jacobi() {
    let op = moran_operator(&path3());
    let (vals, vecs) = jacobi_eigen(op.clone());
    let b = leading_eigenvectors(&op, 1).unwrap();
    assert!((b.eigenvalues()[0] - vals[0]).abs() < 1e-10);
    // The top eigenvalue (0) is shared with the constant vector, so compare subspaces.
    let q = (0..3).take_while(|&j| (vals[j] - vals[0]).abs() < 1e-10).count();
    assert_eq!(q, 2);
    let proj = vecs.columns(0, q).transpose() * b.vectors();
    assert!((proj.norm() - 1.0).abs() < 1e-10);
    let centered = picarz::spectral::moran_basis(&path3(), 1).unwrap();
    let s = 0.5f64.sqrt();
    let v = centered.vectors();
    assert!((v[(0, 0)] - s).abs() < 1e-10 && v[(1, 0)].abs() < 1e-10 && (v[(2, 0)] + s).abs() < 1e-10);
    assert!((op * DMatrix::from_element(3, 1, 1.0)).amax() < 1e-14);
}

#[test]
fn dense_oracle_agreement_on_meshes() {
    for (seed, target, mode) in [(1, 60, MeshMode::RegularLattice), (2, 150, MeshMode::Delaunay), (3, 200, MeshMode::RegularLattice)] {
        let n = mesh_graph(40, target, seed, mode);
        let m = n.dim();
        assert!(m <= 220);
        let op = moran_operator(&n);
        let (vals, vecs) = jacobi_eigen(op.clone());
        let p = 20.min(m / 3);
        let b = moran_basis(&n, p).unwrap();
        check_basis(&b, 1e-10);
        for j in 0..p {
            assert!((b.eigenvalues()[j] - vals[j]).abs() < 1e-8, "eig {j}: {} vs {}", b.eigenvalues()[j], vals[j]);
        }
        // Residual
        let res = &op * b.vectors() - b.vectors() * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(b.eigenvalues()));
        assert!(res.amax() <= 1e-8);
        // Principal angles against the oracle subspace, skipping a split cluster at the boundary.
        let mut q = p;
        while q > 1 && (vals[q - 1] - vals[q]).abs() < 1e-6 {
            q -= 1;
        }
        let u = vecs.columns(0, q).into_owned();
        let w = b.vectors().columns(0, q).into_owned();
        let s = (u.transpose() * w).singular_values();
        let min_cos = s.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_cos > (1e-6f64).cos(), "largest principal angle too big: cos = {min_cos}");
    }
}

#[test]
fn sign_convention_first_nonzero_positive() {
    let b = moran_basis(&mesh_graph(30, 80, 4, MeshMode::RegularLattice), 8).unwrap();
    for j in 0..b.rank() {
        let first = b.vectors().column(j).iter().cloned().find(|v| v.abs() > 1e-12).unwrap();
        assert!(first > 0.0);
    }
}

#[test]
fn rank_must_be_below_dimension() {
    assert!(moran_basis(&path3(), 3).is_err());
}

#[test]
fn icar_quadratic_form_is_edge_sum() {
    let n = mesh_graph(30, 100, 5, MeshMode::Delaunay);
    let q = build_precision(&n, PrecisionSpec::Icar).unwrap();
    let mut r = rng::stream(9, 0);
    let ones = vec![1.0; n.dim()];
    assert!(q.mul_vec(&ones).iter().all(|v| v.abs() < 1e-12));
    for _ in 0..1000 {
        let z: Vec<f64> = (0..n.dim()).map(|_| StandardNormal.sample(&mut r)).collect();
        let mut edge_sum = 0.0;
        for i in 0..n.dim() {
            for &j in n.neighbors(i) {
                if j > i {
                    edge_sum += (z[i] - z[j]).powi(2);
                }
            }
        }
        let qf = q.quad_form(&z);
        assert!(qf >= 0.0);
        assert!((qf - edge_sum).abs() < 1e-9 * edge_sum.max(1.0));
    }
}

#[test]
fn reduced_precision_forms() {
    let n = mesh_graph(30, 100, 6, MeshMode::RegularLattice);
    let b = moran_basis(&n, 10).unwrap();
    let eye = build_precision(&n, PrecisionSpec::Identity).unwrap();
    let p = reduced_precision(&b, &eye).unwrap();
    assert!((p.matrix() - DMatrix::<f64>::identity(10, 10)).amax() < 1e-10);

    let icar = build_precision(&n, PrecisionSpec::Icar).unwrap();
    let p = reduced_precision(&b, &icar).unwrap();
    let dense = b.vectors().transpose() * icar.to_dense() * b.vectors();
    assert!((p.matrix() - &dense).amax() < 1e-10);
    assert!((p.matrix() - p.matrix().transpose()).amax() <= 1e-12);
    let l = p.cholesky();
    assert!((l * l.transpose() - p.matrix()).amax() < 1e-10);
    let det = dense.determinant();
    assert!((p.log_det() - det.ln()).abs() < 1e-8);

    let b1 = b.leading(1).unwrap();
    let p1 = reduced_precision(&b1, &icar).unwrap();
    let col: Vec<f64> = b.vectors().column(0).iter().cloned().collect();
    assert!((p1.matrix()[(0, 0)] - icar.quad_form(&col)).abs() < 1e-12);
}

#[test]
fn car_precision_entries() {
    let q = build_precision(&path3(), PrecisionSpec::Car(0.9)).unwrap();
    let expect = [[1.0, -0.9, 0.0], [-0.9, 2.0, -0.9], [0.0, -0.9, 1.0]];
    for (i, row) in expect.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((q.get(i, j) - v).abs() < 1e-15);
        }
    }
}

#[test]
fn morans_i_null_expectation() {
    let n = mesh_graph(50, 400, 7, MeshMode::RegularLattice);
    let m = n.dim();
    let mut r = rng::stream(10, 0);
    let draws = 2000;
    let vals: Vec<f64> = (0..draws)
        .map(|_| {
            let z: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut r)).collect();
            morans_i(&n, &z).unwrap()
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / draws as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    let expect = -1.0 / (m as f64 - 1.0);
    assert!((mean - expect).abs() < 4.0 * sd / (draws as f64).sqrt(), "{mean} vs {expect}");
    assert!(morans_i(&n, &vec![2.0; m]).is_err());
}

#[test]
fn basis_file_round_trip() {
    let b = moran_basis(&mesh_graph(20, 50, 8, MeshMode::RegularLattice), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.txt");
    b.write(&path).unwrap();
    let back = MoranBasis::read(&path).unwrap();
    assert_eq!(back.rank(), 4);
    assert!((back.vectors() - b.vectors()).amax() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_symmetric_and_annihilates_ones(seed in 0u64..1000, target in 20usize..200) {
        let n = mesh_graph(15, target, seed, MeshMode::Delaunay);
        let op = moran_operator(&n);
        prop_assert_eq!(&op, &op.transpose());
        let ones = DMatrix::from_element(n.dim(), 1, 1.0);
        prop_assert!((&op * ones).amax() < 1e-10);
    }

    #[test]
    fn basis_orthonormal_and_centered(seed in 0u64..1000, target in 40usize..400, p in 2usize..12) {
        let n = mesh_graph(20, target, seed, MeshMode::RegularLattice);
        let b = moran_basis(&n, p).unwrap();
        check_basis(&b, 1e-10);
    }
}
