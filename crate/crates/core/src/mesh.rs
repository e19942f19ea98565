//! Two-dimensional conforming triangulations of the unit square.
//!
//! Meshes are immutable once validated. Besides the plain structured grid the
//! generator produces randomly perturbed grids and an "obtuse band" family
//! whose sheared row contains triangles with strongly obtuse angles, the
//! classical trigger for maximum-principle failures of linear elements.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary markers used by the generator (counterclockwise from the bottom side).
pub const MARKER_BOTTOM: i32 = 1;
pub const MARKER_RIGHT: i32 = 2;
pub const MARKER_TOP: i32 = 3;
pub const MARKER_LEFT: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: i32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Validates and builds a mesh.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        if self.triangles.is_empty() {
            return Err(Error::Validation("mesh has no triangles".into()));
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::Validation(format!("vertex {i} has non-finite coordinates")));
            }
        }
        let (lo, hi) = self.bounding_box();
        let bbox_area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let min_area = 1e-14 * bbox_area;

        let mut used = vec![false; nv];
        // directed edge -> triangle index
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut incidence: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::Validation(format!(
                        "triangle {t} references vertex {v}, only {nv} vertices"
                    )));
                }
                used[v] = true;
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!("triangle {t} repeats a vertex")));
            }
            let area = self.signed_area(t);
            if area <= min_area {
                return Err(Error::Validation(format!(
                    "triangle {t} has non-positive area {area:e} (clockwise or degenerate)"
                )));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if directed.insert((a, b), t).is_some() {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) traversed in the same direction by two triangles"
                    )));
                }
                let count = incidence.entry(sorted_pair(a, b)).or_insert(0);
                *count += 1;
                if *count > 2 {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) shared by more than two triangles"
                    )));
                }
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Validation(format!("vertex {v} is not used by any triangle")));
        }

        let outer: BTreeSet<(usize, usize)> = incidence
            .iter()
            .filter(|(_, &c)| c == 1)
            .map(|(&e, _)| e)
            .collect();
        let mut declared = BTreeSet::new();
        for e in &self.boundary_edges {
            let [a, b] = e.vertices;
            if a >= nv || b >= nv {
                return Err(Error::Validation(format!(
                    "boundary edge ({a}, {b}) references a missing vertex"
                )));
            }
            if !declared.insert(sorted_pair(a, b)) {
                return Err(Error::Validation(format!("boundary edge ({a}, {b}) listed twice")));
            }
        }
        if declared != outer {
            let missing = outer.difference(&declared).next();
            let extra = declared.difference(&outer).next();
            return Err(Error::Validation(format!(
                "boundary edges do not match edges with a single triangle \
                 (first undeclared: {missing:?}, first spurious: {extra:?})"
            )));
        }

        // Hanging nodes show up as a vertex lying inside a single-triangle edge.
        let endpoints: BTreeSet<usize> = outer.iter().flat_map(|&(a, b)| [a, b]).collect();
        for &(a, b) in &outer {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len2 = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
            for &v in &endpoints {
                if v == a || v == b {
                    continue;
                }
                let p = self.vertices[v];
                let cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0]);
                if cross.abs() > 1e-12 * len2 {
                    continue;
                }
                let s = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / len2;
                if s > 1e-12 && s < 1.0 - 1e-12 {
                    return Err(Error::Validation(format!(
                        "nonconforming mesh: vertex {v} lies inside edge ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.signed_area(t)).sum()
    }

    /// Gradients of the three barycentric coordinates on triangle `t` (constant per triangle).
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangle_points(t);
        let two_area = 2.0 * signed_area(a, b, c);
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Maps barycentric coordinates on triangle `t` to a physical point.
    pub fn point_at(&self, t: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Interior angles (radians) at the three corners of triangle `t`.
    pub fn angles(&self, t: usize) -> [f64; 3] {
        let p = self.triangle_points(t);
        let mut out = [0.0; 3];
        for (k, angle) in out.iter_mut().enumerate() {
            let o = p[k];
            let u = [p[(k + 1) % 3][0] - o[0], p[(k + 1) % 3][1] - o[1]];
            let w = [p[(k + 2) % 3][0] - o[0], p[(k + 2) % 3][1] - o[1]];
            let cross = u[0] * w[1] - u[1] * w[0];
            let dot = u[0] * w[0] + u[1] * w[1];
            *angle = cross.abs().atan2(dot);
        }
        out
    }

    pub fn max_angle(&self) -> f64 {
        (0..self.triangle_count())
            .flat_map(|t| self.angles(t))
            .fold(0.0, f64::max)
    }

    /// All edges as sorted vertex pairs, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let set: BTreeSet<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| sorted_pair(t[k], t[(k + 1) % 3])))
            .collect();
        set.into_iter().collect()
    }

    /// Sorted, deduplicated indices of vertices on the boundary.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self
            .boundary_edges
            .iter()
            .flat_map(|e| e.vertices)
            .collect();
        set.into_iter().collect()
    }

    /// Tensor-product grid on `[xs] x [ys]`, each cell split along its
    /// lower-left to upper-right diagonal.
    pub fn tensor(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::Config("tensor grid needs at least two breakpoints per axis".into()));
        }
        let (nx, ny) = (xs.len() - 1, ys.len() - 1);
        let mut vertices = Vec::with_capacity(xs.len() * ys.len());
        for &y in ys {
            for &x in xs {
                vertices.push([x, y]);
            }
        }
        grid_mesh(vertices, nx, ny)
    }

    /// Tensor mesh of the bounding box whose breakpoints are the boundary
    /// vertex coordinates of `base`, each interval split into `2^level` parts.
    /// Piecewise-linear boundary data of `base` stays exactly representable.
    pub fn refined_tensor(base: &Mesh, level: u32) -> Result<Self> {
        let (xs, ys) = base.refined_breakpoints(level);
        Mesh::tensor(&xs, &ys)
    }

    /// Axis breakpoints of [`Mesh::refined_tensor`], without building the mesh.
    pub fn refined_breakpoints(&self, level: u32) -> (Vec<f64>, Vec<f64>) {
        let ([x0, y0], [x1, y1]) = self.bounding_box();
        let tol = 1e-12 * ((x1 - x0) + (y1 - y0));
        let mut xs = vec![x0, x1];
        let mut ys = vec![y0, y1];
        for &v in &self.boundary_vertices() {
            let [x, y] = self.vertices[v];
            if (y - y0).abs() <= tol || (y - y1).abs() <= tol {
                xs.push(x);
            }
            if (x - x0).abs() <= tol || (x - x1).abs() <= tol {
                ys.push(y);
            }
        }
        let refine = |mut b: Vec<f64>| {
            b.sort_by(f64::total_cmp);
            b.dedup_by(|a, b| (*a - *b).abs() <= tol);
            let parts = 1usize << level;
            let mut out = Vec::with_capacity((b.len() - 1) * parts + 1);
            for w in b.windows(2) {
                for k in 0..parts {
                    out.push(w[0] + (w[1] - w[0]) * k as f64 / parts as f64);
                }
            }
            out.push(*b.last().unwrap());
            out
        };
        (refine(xs), refine(ys))
    }

    /// Text serialization (`mesh2d v1`).
    pub fn to_text(&self) -> String {
        let mut s = String::from("mesh2d v1\n");
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", v[0], v[1]);
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "boundary {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], e.marker);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: text.lines().count(),
                message: format!("unexpected end of file, expected {what}"),
            })
        };
        let (line, header) = next("header")?;
        if header.split_whitespace().collect::<Vec<_>>() != ["mesh2d", "v1"] {
            return Err(Error::Parse {
                line,
                message: format!("expected header `mesh2d v1`, found `{header}`"),
            });
        }

        fn count_line(line: usize, content: &str, keyword: &str) -> Result<usize> {
            let mut it = content.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(k), Some(n), None) if k == keyword => n.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid count `{n}`"),
                }),
                _ => Err(Error::Parse {
                    line,
                    message: format!("expected `{keyword} <count>`, found `{content}`"),
                }),
            }
        }
        fn fields<T: std::str::FromStr, const N: usize>(line: usize, content: &str) -> Result<[T; N]> {
            let parts: Vec<&str> = content.split_whitespace().collect();
            if parts.len() != N {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {N} fields, found {}", parts.len()),
                });
            }
            let mut out = Vec::with_capacity(N);
            for p in parts {
                out.push(p.parse::<T>().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse `{p}`"),
                })?);
            }
            out.try_into().map_err(|_| Error::Parse {
                line,
                message: "field count mismatch".into(),
            })
        }

        let (line, content) = next("vertex count")?;
        let nv = count_line(line, content, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, content) = next("vertex")?;
            vertices.push(fields::<f64, 2>(line, content)?);
        }
        let (line, content) = next("triangle count")?;
        let nt = count_line(line, content, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, content) = next("triangle")?;
            triangles.push(fields::<usize, 3>(line, content)?);
        }
        let (line, content) = next("boundary count")?;
        let nb = count_line(line, content, "boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (line, content) = next("boundary edge")?;
            let [a, b, m] = fields::<i64, 3>(line, content)?;
            if a < 0 || b < 0 {
                return Err(Error::Parse {
                    line,
                    message: "negative vertex index".into(),
                });
            }
            boundary.push(BoundaryEdge {
                vertices: [a as usize, b as usize],
                marker: m as i32,
            });
        }
        if let Some((line, content)) = lines.next() {
            return Err(Error::Parse {
                line,
                message: format!("trailing content `{content}`"),
            });
        }
        Mesh::new(vertices, triangles, boundary)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Mesh::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Builds a mesh from a row-major grid of `(nx+1) x (ny+1)` vertices whose
/// outer ring lies on the boundary of the domain.
fn grid_mesh(vertices: Vec<Point>, nx: usize, ny: usize) -> Result<Mesh> {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(BoundaryEdge { vertices: [id(i, 0), id(i + 1, 0)], marker: MARKER_BOTTOM });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge { vertices: [id(nx, j), id(nx, j + 1)], marker: MARKER_RIGHT });
    }
    for i in (0..nx).rev() {
        boundary.push(BoundaryEdge { vertices: [id(i + 1, ny), id(i, ny)], marker: MARKER_TOP });
    }
    for j in (0..ny).rev() {
        boundary.push(BoundaryEdge { vertices: [id(0, j + 1), id(0, j)], marker: MARKER_LEFT });
    }
    Mesh::new(vertices, triangles, boundary)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Structured,
    Perturbed,
    ObtuseBand,
}

impl MeshKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeshKind::Structured => "structured",
            MeshKind::Perturbed => "perturbed",
            MeshKind::ObtuseBand => "obtuse_band",
        }
    }
}

impl std::str::FromStr for MeshKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(MeshKind::Structured),
            "perturbed" => Ok(MeshKind::Perturbed),
            "obtuse_band" => Ok(MeshKind::ObtuseBand),
            other => Err(Error::Config(format!(
                "unknown mesh kind `{other}` (expected structured, perturbed or obtuse_band)"
            ))),
        }
    }
}

/// Reproducible description of a generated mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshFamily {
    pub kind: MeshKind,
    pub resolution: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl MeshFamily {
    pub fn new(kind: MeshKind, resolution: usize, perturbation: f64, seed: u64) -> Self {
        MeshFamily { kind, resolution, perturbation, seed }
    }

    pub fn structured(resolution: usize) -> Self {
        MeshFamily::new(MeshKind::Structured, resolution, 0.0, 0)
    }
}

/// Generates a mesh of the unit square.
///
/// * `structured`: `n x n` squares, each split by its rising diagonal; all
///   angles are at most a right angle.
/// * `perturbed`: the structured mesh with every interior vertex displaced by
///   a random vector of length below `perturbation * h / 2`, which keeps every
///   triangle positively oriented.
/// * `obtuse_band`: one interior grid line (row picked by the seed) is moved
///   down so that the row below it is compressed by `1 - 2 * perturbation`,
///   and its interior vertices are sheared right by `h / 2`. Both triangles
///   adjacent to the sheared diagonals then carry an angle of at least
///   `pi - atan(2)` (about 116.6 degrees). Requires `n >= 2`.
pub fn generate(family: &MeshFamily) -> Result<Mesh> {
    let n = family.resolution;
    let p = family.perturbation;
    if n == 0 {
        return Err(Error::Config("mesh resolution must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&p) {
        return Err(Error::Config(format!("perturbation {p} outside [0, 0.5)")));
    }
    let h = 1.0 / n as f64;
    let coord = |i: usize| if i == n { 1.0 } else { i as f64 * h };
    let mut vertices: Vec<Point> = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| (i, j)))
        .map(|(i, j)| [coord(i), coord(j)])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(family.seed);
    match family.kind {
        MeshKind::Structured => {}
        MeshKind::Perturbed => {
            for j in 1..n {
                for i in 1..n {
                    let (dx, dy) = loop {
                        let dx: f64 = rng.random_range(-1.0..1.0);
                        let dy: f64 = rng.random_range(-1.0..1.0);
                        if dx * dx + dy * dy < 1.0 {
                            break (dx, dy);
                        }
                    };
                    let v = &mut vertices[j * (n + 1) + i];
                    v[0] += 0.5 * p * h * dx;
                    v[1] += 0.5 * p * h * dy;
                }
            }
        }
        MeshKind::ObtuseBand => {
            if n < 2 {
                return Err(Error::Config("obtuse_band meshes need resolution n >= 2".into()));
            }
            let row = rng.random_range(0..n - 1);
            let line = row + 1;
            let y = row as f64 * h + h * (1.0 - 2.0 * p);
            for i in 0..=n {
                let v = &mut vertices[line * (n + 1) + i];
                v[1] = y;
                if i > 0 && i < n {
                    v[0] += 0.5 * h;
                }
            }
        }
    }
    grid_mesh(vertices, n, n)
}

/// Bucket-grid point location.
#[derive(Clone, Debug)]
pub struct PointLocator {
    lo: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let (lo, hi) = mesh.bounding_box();
        let side = ((mesh.triangle_count() as f64).sqrt().ceil() as usize).max(1);
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        let index = |x: f64, d: usize| -> usize {
            (((x - lo[d]) / cell[d]).floor().max(0.0) as usize).min(dims[d] - 1)
        };
        for t in 0..mesh.triangle_count() {
            let pts = mesh.triangle_points(t);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for q in pts {
                for d in 0..2 {
                    a[d] = a[d].min(q[d]);
                    b[d] = b[d].max(q[d]);
                }
            }
            let tol = [1e-12 * cell[0], 1e-12 * cell[1]];
            for j in index(a[1] - tol[1], 1)..=index(b[1] + tol[1], 1) {
                for i in index(a[0] - tol[0], 0)..=index(b[0] + tol[0], 0) {
                    buckets[j * side + i].push(t);
                }
            }
        }
        PointLocator { lo, cell, dims, buckets }
    }

    /// Triangles whose bounding boxes may meet the box `[lo, hi]`, sorted.
    pub fn candidates(&self, lo: Point, hi: Point) -> Vec<usize> {
        let index = |x: f64, d: usize| -> usize {
            (((x - self.lo[d]) / self.cell[d]).floor().max(0.0) as usize).min(self.dims[d] - 1)
        };
        let mut out = Vec::new();
        for j in index(lo[1], 1)..=index(hi[1], 1) {
            for i in index(lo[0], 0)..=index(hi[0], 0) {
                out.extend_from_slice(&self.buckets[j * self.dims[0] + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Finds a triangle containing `x` and the barycentric coordinates of `x`
    /// in it. Points within a relative tolerance of 1e-10 outside the mesh are
    /// snapped onto the closest containing triangle.
    pub fn locate(&self, mesh: &Mesh, x: Point) -> Option<(usize, [f64; 3])> {
        let mut ij = [0usize; 2];
        for d in 0..2 {
            let s = ((x[d] - self.lo[d]) / self.cell[d]).floor();
            if s < -1.0 || s > self.dims[d] as f64 {
                return None;
            }
            ij[d] = (s.max(0.0) as usize).min(self.dims[d] - 1);
        }
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[ij[1] * self.dims[0] + ij[0]] {
            let bary = barycentric(mesh, t, x);
            let worst = bary[0].min(bary[1]).min(bary[2]);
            if best.is_none_or(|(_, _, w)| worst > w) {
                best = Some((t, bary, worst));
            }
            if worst >= 0.0 {
                break;
            }
        }
        let (t, mut bary, worst) = best?;
        if worst < -1e-10 {
            return None;
        }
        if worst < 0.0 {
            for b in bary.iter_mut() {
                *b = b.max(0.0);
            }
            let s: f64 = bary.iter().sum();
            for b in bary.iter_mut() {
                *b /= s;
            }
        }
        Some((t, bary))
    }
}

/// Barycentric coordinates of `x` with respect to triangle `t`.
pub fn barycentric(mesh: &Mesh, t: usize, x: Point) -> [f64; 3] {
    let [a, b, c] = mesh.triangle_points(t);
    let area = signed_area(a, b, c);
    let l1 = signed_area(a, x, c) / area;
    let l2 = signed_area(a, b, x) / area;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Mesh {
        generate(&MeshFamily::structured(1)).unwrap()
    }

    #[test]
    fn structured_counts() {
        let m = unit_square();
        assert_eq!((m.vertex_count(), m.triangle_count(), m.boundary_edges().len()), (4, 2, 4));
        let m = generate(&MeshFamily::structured(2)).unwrap();
        assert_eq!((m.vertex_count(), m.triangle_count(), m.boundary_edges().len()), (9, 8, 8));
    }

    #[test]
    fn boundary_vertices_of_small_meshes() {
        assert_eq!(unit_square().boundary_vertices(), vec![0, 1, 2, 3]);
        let m = generate(&MeshFamily::structured(2)).unwrap();
        assert_eq!(m.boundary_vertices(), vec![0, 1, 2, 3, 5, 6, 7, 8]);
    }

    #[test]
    fn obtuse_band_has_obtuse_angles() {
        for seed in 0..20 {
            for &p in &[0.0, 0.2, 0.45] {
                let m = generate(&MeshFamily::new(MeshKind::ObtuseBand, 4, p, seed)).unwrap();
                assert!(m.max_angle() > std::f64::consts::FRAC_PI_2 + 0.1);
                assert!((m.total_area() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn obtuse_band_rejects_single_cell() {
        let err = generate(&MeshFamily::new(MeshKind::ObtuseBand, 1, 0.0, 0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_perturbation_is_config_error() {
        let err = generate(&MeshFamily::new(MeshKind::Perturbed, 3, 0.5, 0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn structured_angles_are_not_obtuse() {
        let m = generate(&MeshFamily::structured(5)).unwrap();
        assert!(m.max_angle() <= std::f64::consts::FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn zero_area_triangle_rejected() {
        let text = "mesh2d v1\nvertices 3\n0 0\n1 0\n2 0\ntriangles 1\n0 1 2\nboundary 3\n0 1 1\n1 2 1\n2 0 1\n";
        assert!(matches!(Mesh::from_text(text), Err(Error::Validation(_))));
    }

    #[test]
    fn edge_shared_by_three_triangles_rejected() {
        let text = "mesh2d v1
vertices 5
0 0
1 0
0.5 1
0.5 -1
0.5 2
triangles 3
0 1 2
1 0 3
0 1 4
boundary 0
";
        let err = Mesh::from_text(text).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn hanging_node_rejected() {
        // big triangle on the left, two small ones sharing a midpoint on the right
        let text = "mesh2d v1
vertices 5
0 0
1 0
1 1
0 1
0.5 0.5
triangles 3
0 2 3
0 1 4
1 2 4
boundary 7
0 1 1
1 2 2
2 3 3
3 0 4
0 4 0
4 2 0
0 2 0
";
        let err = Mesh::from_text(text).unwrap_err();
        assert!(err.to_string().contains("nonconforming"), "{err}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "mesh2d v1\n# comment\nvertices 2\n0 0\n1 x\n";
        match Mesh::from_text(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Mesh::from_text("mesh3d v1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = generate(&MeshFamily::new(MeshKind::Perturbed, 5, 0.4, 11)).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn locator_finds_points() {
        let m = generate(&MeshFamily::new(MeshKind::ObtuseBand, 6, 0.3, 2)).unwrap();
        let loc = PointLocator::new(&m);
        for i in 0..=20 {
            for j in 0..=20 {
                let x = [i as f64 / 20.0, j as f64 / 20.0];
                let (t, b) = loc.locate(&m, x).expect("inside");
                let y = m.point_at(t, b);
                assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
                assert!(b.iter().all(|&v| v >= -1e-12));
            }
        }
        assert!(loc.locate(&m, [1.5, 0.5]).is_none());
    }
}
