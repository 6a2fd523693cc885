//! Triangular meshes over the observation domain and the piecewise-linear
//! projector that carries mesh-vertex fields to arbitrary sites.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Barycentric weights below this are treated as zero when deciding whether a
/// point lies in a triangle.
const BARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Twice the signed area of the triangle (a, b, c); positive when the
/// vertices are counter-clockwise.
#[inline]
pub fn orient(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point2,
    pub max: Point2,
}

impl BoundingBox {
    pub fn of(points: &[Point2]) -> Option<Self> {
        let first = points.first()?;
        let mut bb = BoundingBox {
            min: *first,
            max: *first,
        };
        for p in &points[1..] {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Expand by `fraction` of the span on every side.
    pub fn expanded(&self, fraction: f64) -> Self {
        let dx = fraction * self.width();
        let dy = fraction * self.height();
        BoundingBox {
            min: Point2::new(self.min.x - dx, self.min.y - dy),
            max: Point2::new(self.max.x + dx, self.max.y + dy),
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshMode {
    /// Uniform grid with every cell split along its lower-left to upper-right
    /// diagonal.
    RegularLattice,
    /// Delaunay triangulation of the locations plus a ring on the padded box.
    Delaunay,
}

impl std::str::FromStr for MeshMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regular-lattice" | "lattice" | "regular" => Ok(MeshMode::RegularLattice),
            "delaunay" => Ok(MeshMode::Delaunay),
            other => Err(Error::Config(format!("unknown mesh mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for MeshMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshMode::RegularLattice => f.write_str("regular-lattice"),
            MeshMode::Delaunay => f.write_str("delaunay"),
        }
    }
}

/// Uniform bucket grid over triangle bounding boxes, used by [`TriangleMesh::locate`].
#[derive(Debug, Clone)]
struct Locator {
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl Locator {
    fn build(vertices: &[Point2], triangles: &[[usize; 3]]) -> Self {
        let bbox = BoundingBox::of(vertices).expect("mesh has vertices");
        let t = triangles.len().max(1);
        let aspect = if bbox.height() > 0.0 {
            bbox.width() / bbox.height()
        } else {
            1.0
        };
        let nx = ((t as f64 * aspect).sqrt().ceil() as usize).clamp(1, 4096);
        let ny = ((t as f64 / nx as f64).ceil() as usize).clamp(1, 4096);
        let mut cells = vec![Vec::new(); nx * ny];
        let mut loc = Locator {
            bbox,
            nx,
            ny,
            cells: Vec::new(),
        };
        for (ti, tri) in triangles.iter().enumerate() {
            let pts = tri.map(|v| vertices[v]);
            let tb = BoundingBox::of(&pts).unwrap();
            let (i0, j0) = loc.cell_of(&tb.min);
            let (i1, j1) = loc.cell_of(&tb.max);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(ti as u32);
                }
            }
        }
        loc.cells = cells;
        loc
    }

    fn cell_of(&self, p: &Point2) -> (usize, usize) {
        let fx = if self.bbox.width() > 0.0 {
            (p.x - self.bbox.min.x) / self.bbox.width()
        } else {
            0.0
        };
        let fy = if self.bbox.height() > 0.0 {
            (p.y - self.bbox.min.y) / self.bbox.height()
        } else {
            0.0
        };
        let i = ((fx * self.nx as f64).floor().max(0.0) as usize).min(self.nx - 1);
        let j = ((fy * self.ny as f64).floor().max(0.0) as usize).min(self.ny - 1);
        (i, j)
    }
}

/// A triangulated region. Triangles are stored counter-clockwise.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    boundary_padding: f64,
    locator: Locator,
}

impl TriangleMesh {
    /// Assemble a mesh from explicit vertices and triangles. Triangles are
    /// re-oriented counter-clockwise; zero-area triangles are rejected.
    pub fn new(vertices: Vec<Point2>, triangles: Vec<[usize; 3]>, padding: f64) -> Result<Self> {
        if vertices.len() < 3 || triangles.is_empty() {
            return Err(Error::InvalidArgument(
                "a mesh needs at least 3 vertices and 1 triangle".into(),
            ));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite mesh vertex ({}, {})",
                p.x, p.y
            )));
        }
        let m = vertices.len();
        let mut tris = Vec::with_capacity(triangles.len());
        for (ti, t) in triangles.into_iter().enumerate() {
            if t.iter().any(|&v| v >= m) {
                return Err(Error::InvalidArgument(format!(
                    "triangle {ti} references a vertex outside 0..{m}"
                )));
            }
            let area2 = orient(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
            if area2 == 0.0 || !area2.is_finite() {
                return Err(Error::InvalidArgument(format!("triangle {ti} has zero area")));
            }
            tris.push(if area2 > 0.0 { t } else { [t[0], t[2], t[1]] });
        }
        let locator = Locator::build(&vertices, &tris);
        Ok(Self {
            vertices,
            triangles: tris,
            boundary_padding: padding,
            locator,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary_padding(&self) -> f64 {
        self.boundary_padding
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(&self.vertices).unwrap()
    }

    /// Distinct undirected edges as `(lo, hi)` pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    /// Total triangle area.
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| 0.5 * orient(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]))
            .sum()
    }

    /// Barycentric weights of `p` with respect to triangle `ti`.
    pub fn barycentric(&self, ti: usize, p: &Point2) -> [f64; 3] {
        let [ia, ib, ic] = self.triangles[ti];
        let (a, b, c) = (&self.vertices[ia], &self.vertices[ib], &self.vertices[ic]);
        let det = orient(a, b, c);
        let wb = orient(a, p, c) / det;
        let wc = orient(a, b, p) / det;
        [1.0 - wb - wc, wb, wc]
    }

    /// Find the triangle containing `p`. Points on shared edges or vertices
    /// resolve to the lowest-indexed containing triangle.
    pub fn locate(&self, p: &Point2) -> Result<(usize, [f64; 3])> {
        let outside = || Error::OutsideMesh { x: p.x, y: p.y };
        if !p.is_finite() {
            return Err(outside());
        }
        let bb = &self.locator.bbox;
        let slack = 1e-12 * (bb.width() + bb.height()).max(1.0);
        if p.x < bb.min.x - slack
            || p.x > bb.max.x + slack
            || p.y < bb.min.y - slack
            || p.y > bb.max.y + slack
        {
            return Err(outside());
        }
        let (i, j) = self.locator.cell_of(p);
        for &ti in &self.locator.cells[j * self.locator.nx + i] {
            let ti = ti as usize;
            let w = self.barycentric(ti, p);
            if w.iter().all(|&x| x >= -BARY_TOL) {
                let mut w = w.map(|x| x.max(0.0));
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= s);
                return Ok((ti, w));
            }
        }
        Err(outside())
    }

    /// Write the plain-text mesh format: `m t`, `m` vertex lines, `t` triangle
    /// lines with 0-based indices.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.vertices.len(), self.triangles.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{} {}", v.x, v.y).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "mesh file";
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse(ctx, "empty file"))?;
        let (m, t) = parse_pair::<usize>(header).ok_or_else(|| Error::parse(ctx, "bad header"))?;
        let mut vertices = Vec::with_capacity(m);
        for k in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(ctx, format!("missing vertex line {k}")))?;
            let (x, y) = parse_pair::<f64>(line)
                .ok_or_else(|| Error::parse(ctx, format!("bad vertex line {k}: '{line}'")))?;
            vertices.push(Point2::new(x, y));
        }
        let mut triangles = Vec::with_capacity(t);
        for k in 0..t {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(ctx, format!("missing triangle line {k}")))?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(ctx, format!("bad triangle line {k}")))?;
            if idx.len() != 3 {
                return Err(Error::parse(ctx, format!("triangle line {k} needs 3 indices")));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
        TriangleMesh::new(vertices, triangles, 0.0)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_pair<T: std::str::FromStr>(line: &str) -> Option<(T, T)> {
    let mut it = line.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b))
}

fn check_not_collinear(points: &[Point2]) -> Result<BoundingBox> {
    if points.len() < 3 || points.iter().any(|p| !p.is_finite()) {
        return Err(Error::DegeneratePoints);
    }
    let bb = BoundingBox::of(points).unwrap();
    let scale = bb.width().max(bb.height());
    if scale <= 0.0 {
        return Err(Error::DegeneratePoints);
    }
    // Farthest point from the first, then the point farthest off that line.
    let a = points[0];
    let b = *points
        .iter()
        .max_by(|p, q| a.dist(p).total_cmp(&a.dist(q)))
        .unwrap();
    let base = a.dist(&b);
    let off = points
        .iter()
        .map(|p| orient(&a, &b, p).abs() / base)
        .fold(0.0, f64::max);
    if base == 0.0 || off <= 1e-12 * scale {
        return Err(Error::DegeneratePoints);
    }
    Ok(bb)
}

/// Build a mesh enveloping `locations`, whose bounding box is the location
/// bounding box expanded by `padding` (fraction of span) on every side.
pub fn build_mesh(
    locations: &[Point2],
    mode: MeshMode,
    target_vertices: usize,
    padding: f64,
) -> Result<TriangleMesh> {
    if target_vertices < 4 {
        return Err(Error::InvalidArgument(format!(
            "target_vertices must be at least 4, got {target_vertices}"
        )));
    }
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "padding must be finite and non-negative, got {padding}"
        )));
    }
    let bb = check_not_collinear(locations)?.expanded(padding);
    match mode {
        MeshMode::RegularLattice => regular_lattice(&bb, target_vertices, padding),
        MeshMode::Delaunay => delaunay_mesh(locations, &bb, target_vertices, padding),
    }
}

/// Lattice dimensions (vertices per axis) whose product is close to `target`
/// and whose cell aspect ratio best matches the box.
fn lattice_dims(width: f64, height: f64, target: usize) -> (usize, usize) {
    let want = (width / height).ln();
    let mut best: Option<((bool, f64, f64), (usize, usize))> = None;
    for nx in 2..=target.max(2) / 2 + 1 {
        let base = (target as f64 / nx as f64).round() as usize;
        for ny in [base.saturating_sub(1), base, base + 1] {
            if ny < 2 {
                continue;
            }
            let count_err = (nx * ny) as f64 / target as f64 - 1.0;
            let aspect_err = (((nx - 1) as f64 / (ny - 1) as f64).ln() - want).abs();
            let key = (count_err.abs() > 0.1, aspect_err, count_err.abs());
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, (nx, ny)));
            }
        }
    }
    best.map(|(_, d)| d).unwrap_or((2, 2))
}

fn regular_lattice(bb: &BoundingBox, target: usize, padding: f64) -> Result<TriangleMesh> {
    let (nx, ny) = lattice_dims(bb.width(), bb.height(), target);
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        // Pin the last row/column to the box edge exactly.
        let y = if j == ny - 1 {
            bb.max.y
        } else {
            bb.min.y + bb.height() * j as f64 / (ny - 1) as f64
        };
        for i in 0..nx {
            let x = if i == nx - 1 {
                bb.max.x
            } else {
                bb.min.x + bb.width() * i as f64 / (nx - 1) as f64
            };
            vertices.push(Point2::new(x, y));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v00 = j * nx + i;
            let v10 = v00 + 1;
            let v01 = v00 + nx;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    TriangleMesh::new(vertices, triangles, padding)
}

fn in_circumcircle(a: &Point2, b: &Point2, c: &Point2, p: &Point2) -> bool {
    // a, b, c counter-clockwise.
    let (adx, ady) = (a.x - p.x, a.y - p.y);
    let (bdx, bdy) = (b.x - p.x, b.y - p.y);
    let (cdx, cdy) = (c.x - p.x, c.y - p.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    let det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
    det > 0.0
}

/// Bowyer-Watson triangulation. The ring on the padded box is inserted first
/// so the hull is exactly the box.
fn delaunay_mesh(
    locations: &[Point2],
    bb: &BoundingBox,
    target: usize,
    padding: f64,
) -> Result<TriangleMesh> {
    let per_side = ((target as f64).sqrt() / 2.0).ceil().max(1.0) as usize;
    let mut points: Vec<Point2> = Vec::new();
    for k in 0..per_side {
        let f = k as f64 / per_side as f64;
        points.push(Point2::new(bb.min.x + f * bb.width(), bb.min.y));
        points.push(Point2::new(bb.max.x, bb.min.y + f * bb.height()));
        points.push(Point2::new(bb.max.x - f * bb.width(), bb.max.y));
        points.push(Point2::new(bb.min.x, bb.max.y - f * bb.height()));
    }
    for p in locations {
        if !points.iter().any(|q| q == p) {
            points.push(*p);
        }
    }
    let n = points.len();
    let cx = 0.5 * (bb.min.x + bb.max.x);
    let cy = 0.5 * (bb.min.y + bb.max.y);
    let r = 50.0 * bb.width().max(bb.height());
    points.push(Point2::new(cx - 2.0 * r, cy - r));
    points.push(Point2::new(cx + 2.0 * r, cy - r));
    points.push(Point2::new(cx, cy + 2.0 * r));

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let mut boundary: Vec<(usize, usize)> = Vec::new();
    for pi in 0..n {
        let p = points[pi];
        boundary.clear();
        let mut k = 0;
        while k < tris.len() {
            let t = tris[k];
            if in_circumcircle(&points[t[0]], &points[t[1]], &points[t[2]], &p) {
                for e in 0..3 {
                    let edge = (t[e], t[(e + 1) % 3]);
                    // An edge shared by two cavity triangles appears in both
                    // orientations and is interior.
                    if let Some(pos) = boundary.iter().position(|&(a, b)| a == edge.1 && b == edge.0) {
                        boundary.swap_remove(pos);
                    } else {
                        boundary.push(edge);
                    }
                }
                tris.swap_remove(k);
            } else {
                k += 1;
            }
        }
        for &(a, b) in &boundary {
            tris.push([a, b, pi]);
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    tris.sort_unstable();
    points.truncate(n);
    let mesh = TriangleMesh::new(points, tris, padding)?;
    let want = bb.width() * bb.height();
    if (mesh.area() - want).abs() > 1e-9 * want {
        return Err(Error::Numerical(
            "delaunay triangulation does not cover the padded box".into(),
        ));
    }
    Ok(mesh)
}

/// Symmetric 0/1 vertex adjacency of a mesh, stored as sorted neighbour lists.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); m];
        for &(a, b) in edges {
            if a >= m || b >= m {
                return Err(Error::InvalidArgument(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {a}")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn dim(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.neighbors.iter().map(|l| l.len() as f64).collect()
    }

    pub fn nnz(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.nnz() / 2
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.neighbors[i].binary_search(&j).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    /// `N v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .map(|l| l.iter().map(|&j| v[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let m = self.dim();
        let mut d = nalgebra::DMatrix::zeros(m, m);
        for (i, l) in self.neighbors.iter().enumerate() {
            for &j in l {
                d[(i, j)] = 1.0;
            }
        }
        d
    }

    pub fn is_connected(&self) -> bool {
        let m = self.dim();
        if m == 0 {
            return true;
        }
        let mut seen = vec![false; m];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == m
    }
}

pub fn adjacency(mesh: &TriangleMesh) -> AdjacencyMatrix {
    AdjacencyMatrix::from_edges(mesh.num_vertices(), &mesh.edges())
        .expect("mesh edges index valid vertices")
}

/// Row-sparse `n x m` interpolation matrix with at most three nonzeros per
/// row, each row holding barycentric weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    ncols: usize,
    rows: Vec<[(usize, f64); 3]>,
}

impl Projector {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64); 3] {
        &self.rows[i]
    }

    /// `A v` for a mesh-vertex field `v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.ncols, "projector column mismatch");
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, w)| w * v[j]).sum())
            .collect()
    }

    /// `A' u`.
    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.rows.len(), "projector row mismatch");
        let mut out = vec![0.0; self.ncols];
        for (r, &ui) in self.rows.iter().zip(u) {
            for &(j, w) in r {
                out[j] += w * ui;
            }
        }
        out
    }

    /// Projector restricted to the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Projector {
        Projector {
            ncols: self.ncols,
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows(), self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                d[(i, j)] += w;
            }
        }
        d
    }
}

pub fn build_projector(mesh: &TriangleMesh, sites: &[Point2]) -> Result<Projector> {
    let rows = sites
        .iter()
        .map(|p| {
            let (ti, w) = mesh.locate(p)?;
            let t = mesh.triangles()[ti];
            Ok([(t[0], w[0]), (t[1], w[1]), (t[2], w[2])])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Projector {
        ncols: mesh.num_vertices(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
        ]
    }

    #[test]
    fn smallest_lattice_is_two_triangles() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 4, 0.0).unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_triangles(), 2);
        assert!((mesh.area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_triangle_degrees() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 4, 0.0).unwrap();
        let n = adjacency(&mesh);
        let mut degs: Vec<(Point2, usize)> = (0..4).map(|i| (mesh.vertices()[i], n.degree(i))).collect();
        degs.sort_by(|a, b| a.1.cmp(&b.1));
        assert_eq!(degs.iter().map(|d| d.1).collect::<Vec<_>>(), vec![2, 2, 3, 3]);
        // The diagonal runs (0,0)-(1,1).
        let diag: Vec<Point2> = degs.iter().filter(|d| d.1 == 3).map(|d| d.0).collect();
        assert!(diag.contains(&Point2::new(0.0, 0.0)));
        assert!(diag.contains(&Point2::new(1.0, 1.0)));
        assert_eq!(n.nnz(), 2 * mesh.edges().len());
    }

    #[test]
    fn padding_expands_bounding_box() {
        let pts = vec![
            Point2::new(0.2, 0.1),
            Point2::new(0.7, 0.3),
            Point2::new(0.4, 0.9),
        ];
        for mode in [MeshMode::RegularLattice, MeshMode::Delaunay] {
            let mesh = build_mesh(&pts, mode, 50, 0.1).unwrap();
            let bb = mesh.bounding_box();
            assert!((bb.min.x - 0.15).abs() < 1e-12, "{mode}");
            assert!((bb.max.x - 0.75).abs() < 1e-12);
            assert!((bb.min.y - 0.02).abs() < 1e-12);
            assert!((bb.max.y - 0.98).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_vertex_count_near_target() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(0.0, 1.0),
        ];
        for target in [30, 100, 257, 1000, 5888] {
            let mesh = build_mesh(&pts, MeshMode::RegularLattice, target, 0.1).unwrap();
            let rel = (mesh.num_vertices() as f64 / target as f64 - 1.0).abs();
            assert!(rel <= 0.1, "target {target} -> {}", mesh.num_vertices());
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let line = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(2.0, 2.0),
        ];
        let err = build_mesh(&line, MeshMode::RegularLattice, 10, 0.1).unwrap_err();
        assert_eq!(err.to_string(), "degenerate point set");
        assert!(build_mesh(&unit_square(), MeshMode::RegularLattice, 3, 0.1).is_err());
        assert!(build_mesh(&unit_square(), MeshMode::RegularLattice, 10, -0.5).is_err());
        assert!(build_mesh(&unit_square()[..2], MeshMode::Delaunay, 10, 0.1).is_err());
    }

    #[test]
    fn locate_vertices_and_centroids() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 16, 0.0).unwrap();
        for (vi, v) in mesh.vertices().iter().enumerate() {
            let (ti, w) = mesh.locate(v).unwrap();
            let t = mesh.triangles()[ti];
            for k in 0..3 {
                let expect = if t[k] == vi { 1.0 } else { 0.0 };
                assert!((w[k] - expect).abs() < 1e-12);
            }
        }
        for (ti, t) in mesh.triangles().iter().enumerate() {
            let c = Point2::new(
                t.iter().map(|&v| mesh.vertices()[v].x).sum::<f64>() / 3.0,
                t.iter().map(|&v| mesh.vertices()[v].y).sum::<f64>() / 3.0,
            );
            let (found, w) = mesh.locate(&c).unwrap();
            assert_eq!(found, ti);
            for x in w {
                assert!((x - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn edge_ties_go_to_lowest_triangle() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 4, 0.0).unwrap();
        // On the shared diagonal.
        let (ti, _) = mesh.locate(&Point2::new(0.5, 0.5)).unwrap();
        assert_eq!(ti, 0);
    }

    #[test]
    fn outside_points_error() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 9, 0.0).unwrap();
        let err = mesh.locate(&Point2::new(1.5, 0.5)).unwrap_err();
        assert!(err.to_string().starts_with("location outside mesh"));
        assert!(build_projector(&mesh, &[Point2::new(-0.1, 0.0)]).is_err());
    }

    #[test]
    fn projector_on_vertices_selects_identity_rows() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 25, 0.0).unwrap();
        let sites = vec![mesh.vertices()[7], mesh.vertices()[3], mesh.vertices()[7]];
        let a = build_projector(&mesh, &sites).unwrap().to_dense();
        for (r, &v) in [7usize, 3, 7].iter().enumerate() {
            for j in 0..mesh.num_vertices() {
                assert_eq!(a[(r, j)], if j == v { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(a.row(0), a.row(2));
    }

    #[test]
    fn mesh_text_round_trip() {
        let mesh = build_mesh(&unit_square(), MeshMode::RegularLattice, 12, 0.05).unwrap();
        let back = TriangleMesh::from_text(&mesh.to_text()).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
        assert!(TriangleMesh::from_text("2 1\n0 0\n").is_err());
    }

    #[test]
    fn adjacency_rejects_self_loops() {
        assert!(AdjacencyMatrix::from_edges(3, &[(1, 1)]).is_err());
        assert!(AdjacencyMatrix::from_edges(3, &[(0, 3)]).is_err());
    }
}
