use std::collections::BTreeSet;

use picarz::geometry::{adjacency, build_mesh, build_projector, MeshMode, Point2, TriangleMesh};
use picarz::rng;
use proptest::prelude::*;
use rand::Rng;

fn uniform_points(n: usize, seed: u64) -> Vec<Point2> {
    let mut r = rng::stream(seed, 0);
    (0..n).map(|_| Point2::new(r.random(), r.random())).collect()
}

// Circumcircle test via the classic 3x3 incircle determinant, evaluated
// relative to d so it stays well-conditioned.
fn strictly_inside_circumcircle(a: &Point2, b: &Point2, c: &Point2, d: &Point2) -> bool {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let det = (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay)
        + (cx * cx + cy * cy) * (ax * by - bx * ay);
    let orient = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = [ax, ay, bx, by, cx, cy].iter().map(|v| v.abs()).fold(0.0, f64::max).powi(4);
    det * orient.signum() > 1e-10 * scale
}

fn brute_edges(mesh: &TriangleMesh) -> BTreeSet<(usize, usize)> {
    let mut set = BTreeSet::new();
    for t in mesh.triangles() {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            set.insert((a.min(b), a.max(b)));
        }
    }
    set
}

fn signed_area(mesh: &TriangleMesh, t: &[usize; 3]) -> f64 {
    let v = mesh.vertices();
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x))
}

#[test]
fn delaunay_empty_circumcircle() {
    let pts = uniform_points(100, 11);
    let mesh = build_mesh(&pts, MeshMode::Delaunay, 100, 0.1).unwrap();
    let v = mesh.vertices();
    for t in mesh.triangles() {
        for (i, d) in v.iter().enumerate() {
            if t.contains(&i) {
                continue;
            }
            assert!(
                !strictly_inside_circumcircle(&v[t[0]], &v[t[1]], &v[t[2]], d),
                "vertex {i} inside circumcircle of {t:?}"
            );
        }
    }
}

#[test]
fn delaunay_contains_every_input_point() {
    let pts = uniform_points(100, 12);
    let mesh = build_mesh(&pts, MeshMode::Delaunay, 100, 0.1).unwrap();
    for p in &pts {
        assert!(mesh.vertices().iter().any(|v| v.x == p.x && v.y == p.y));
        mesh.locate(p).unwrap();
    }
}

#[test]
fn triangles_positive_and_cover_bounding_box() {
    for mode in [MeshMode::RegularLattice, MeshMode::Delaunay] {
        let pts = uniform_points(80, 13);
        let mesh = build_mesh(&pts, mode, 120, 0.1).unwrap();
        let total: f64 = mesh.triangles().iter().map(|t| signed_area(&mesh, t)).sum();
        assert!(mesh.triangles().iter().all(|t| signed_area(&mesh, t) > 0.0));
        let bb = mesh.bounding_box();
        let box_area = bb.width() * bb.height();
        // Lattice tiles the padded box exactly; Delaunay covers the hull of the padded ring.
        assert!(total <= box_area * (1.0 + 1e-12), "{mode}: {total} > {box_area}");
        if mode == MeshMode::RegularLattice {
            assert!((total - box_area).abs() < 1e-10);
        }
    }
}

#[test]
fn adjacency_matches_triangle_edge_enumeration() {
    let pts = uniform_points(40, 14);
    let mesh = build_mesh(&pts, MeshMode::Delaunay, 50, 0.1).unwrap();
    let n = adjacency(&mesh);
    let edges = brute_edges(&mesh);
    assert_eq!(n.nnz(), 2 * edges.len());
    assert_eq!(n.num_edges(), edges.len());
    for i in 0..n.dim() {
        assert_eq!(n.get(i, i), 0.0);
        for j in 0..n.dim() {
            let expect = if edges.contains(&(i.min(j), i.max(j))) { 1.0 } else { 0.0 };
            assert_eq!(n.get(i, j), expect);
            assert_eq!(n.get(i, j), n.get(j, i));
        }
    }
    assert!(n.is_connected());
}

#[test]
fn locate_solves_barycentric_system() {
    let pts = uniform_points(60, 15);
    let mesh = build_mesh(&pts, MeshMode::RegularLattice, 100, 0.1).unwrap();
    let v = mesh.vertices();
    for p in uniform_points(200, 16) {
        let (ti, w) = mesh.locate(&p).unwrap();
        let t = mesh.triangles()[ti];
        let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
        // Independent 2x2 solve for (w1, w2) by Cramer's rule.
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        let w1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
        let w2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
        assert!((w[1] - w1).abs() < 1e-10 && (w[2] - w2).abs() < 1e-10);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let rx = w[0] * a.x + w[1] * b.x + w[2] * c.x;
        let ry = w[0] * a.y + w[1] * b.y + w[2] * c.y;
        assert!((rx - p.x).abs() < 1e-10 && (ry - p.y).abs() < 1e-10);
    }
}

#[test]
fn duplicate_sites_give_identical_rows() {
    let pts = uniform_points(30, 17);
    let mesh = build_mesh(&pts, MeshMode::RegularLattice, 64, 0.1).unwrap();
    let sites = vec![pts[3], pts[7], pts[3]];
    let a = build_projector(&mesh, &sites).unwrap();
    assert_eq!(a.row(0), a.row(2));
}

#[test]
fn mesh_file_round_trip() {
    let pts = uniform_points(30, 18);
    let mesh = build_mesh(&pts, MeshMode::Delaunay, 40, 0.1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mesh.txt");
    mesh.write(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let first = text.lines().next().unwrap();
    assert_eq!(first, format!("{} {}", mesh.num_vertices(), mesh.num_triangles()));
    let back = TriangleMesh::read(&path).unwrap();
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.num_vertices(), mesh.num_vertices());
}

fn points_strategy() -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 5..60)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
        .prop_filter("non-collinear", |pts: &Vec<Point2>| {
            let a = pts[0];
            pts.iter().any(|p| pts.iter().any(|q| picarz::geometry::orient(&a, p, q).abs() > 1e-3))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_affine_exact(pts in points_strategy(), target in 16usize..300, delaunay in any::<bool>()) {
        let mode = if delaunay { MeshMode::Delaunay } else { MeshMode::RegularLattice };
        let mesh = build_mesh(&pts, mode, target, 0.1).unwrap();
        let a = build_projector(&mesh, &pts).unwrap();
        let f = |p: &Point2| 2.0 * p.x - 3.0 * p.y + 1.0;
        let fv: Vec<f64> = mesh.vertices().iter().map(f).collect();
        let interp = a.apply(&fv);
        for (p, v) in pts.iter().zip(&interp) {
            prop_assert!((f(p) - v).abs() <= 1e-10);
        }
        for i in 0..a.nrows() {
            let row = a.row(i);
            let s: f64 = row.iter().map(|(_, w)| w).sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|(_, w)| (0.0..=1.0).contains(w)));
        }
    }

    #[test]
    fn padding_expands_box(pts in points_strategy(), pad in 0.0f64..0.5) {
        let mesh = build_mesh(&pts, MeshMode::RegularLattice, 50, pad).unwrap();
        let bb = picarz::geometry::BoundingBox::of(&pts).unwrap().expanded(pad);
        let mb = mesh.bounding_box();
        prop_assert!((mb.min.x - bb.min.x).abs() < 1e-12 && (mb.max.y - bb.max.y).abs() < 1e-12);
    }

    #[test]
    fn lattice_count_within_ten_percent(pts in points_strategy(), target in 50usize..3000) {
        let mesh = build_mesh(&pts, MeshMode::RegularLattice, target, 0.1).unwrap();
        let m = mesh.num_vertices() as f64;
        prop_assert!((m - target as f64).abs() <= 0.1 * target as f64, "m = {m}, target = {target}");
    }
}
