//! Composite quadrature over a mesh.
//!
//! Every triangle is integrated according to a [`Pieces`] description: as a
//! whole, as an exact set of polynomial sub-triangles, or by uniform
//! subdivision. Subdivided triangles are integrated at two consecutive depths
//! and the difference is reported as an error estimate. Per-triangle results
//! are summed sequentially in triangle order so that results do not depend on
//! the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{quadrature, QuadratureRule};

/// Sub-triangle given by the barycentric coordinates of its corners.
pub type BaryTriangle = [[f64; 3]; 3];

/// How a triangle is to be integrated.
#[derive(Clone, Debug, PartialEq)]
pub enum Pieces {
    /// The integrand is smooth on the whole triangle.
    Whole,
    /// The integrand is smooth on each listed sub-triangle; together they tile the triangle.
    Split(Vec<BaryTriangle>),
    /// The integrand is not piecewise smooth in a known way.
    Subdivide,
    /// The integrand is smooth on either side of the zero set of the quadratic
    /// with these nodal values (vertices, then edges (0,1), (1,2), (2,0)).
    /// Leaves of the subdivision are split along the chord of that curve.
    SubdivideAlong([f64; 6]),
}

impl Pieces {
    /// Coarsest description compatible with both inputs.
    pub fn combine(self, other: Pieces) -> Pieces {
        match (self, other) {
            (Pieces::Whole, p) | (p, Pieces::Whole) => p,
            // no common refinement of two independent descriptions here
            _ => Pieces::Subdivide,
        }
    }

    pub fn is_subdivided(&self) -> bool {
        matches!(self, Pieces::Subdivide | Pieces::SubdivideAlong(_))
    }

    /// Leaves of the subdivision at `depth`, tiling the reference triangle.
    /// Leaves where a chord would follow the curve poorly are refined further.
    pub fn leaves(&self, depth: usize) -> Vec<Leaf> {
        match self {
            Pieces::SubdivideAlong(q) => {
                let mut out = Vec::with_capacity(1 << (2 * depth + 1));
                for_each_uniform(depth, |s| refine_leaf(q, s, EXTRA_LEVELS, false, &mut out));
                out
            }
            _ => uniform_subdivision(depth).into_iter().map(|tri| Leaf { tri, above: None }).collect(),
        }
    }
}

/// Sub-triangle of a subdivision. Pieces cut off by a curve record on which
/// side of it they lie; near the curve that side, not the sign of the
/// curve's function at a quadrature point, selects the smooth branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Leaf {
    pub tri: BaryTriangle,
    pub above: Option<bool>,
}

/// Side of the curve of [`Pieces::SubdivideAlong`] a quadrature point belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch<'a> {
    pub curve: &'a [f64; 6],
    pub above: bool,
}

/// Additional refinement for leaves a single chord cannot resolve.
const EXTRA_LEVELS: usize = 4;

fn refine_leaf(q: &[f64; 6], s: &BaryTriangle, extra: usize, forced: bool, out: &mut Vec<Leaf>) {
    let mid = |a: usize, b: usize| std::array::from_fn(|k| 0.5 * (s[a][k] + s[b][k]));
    let (m01, m12, m20): ([f64; 3], [f64; 3], [f64; 3]) = (mid(0, 1), mid(1, 2), mid(2, 0));
    let phi = s.map(|l| quadratic_at(q, l));
    let nodal = [phi[0], phi[1], phi[2], quadratic_at(q, m01), quadratic_at(q, m12), quadratic_at(q, m20)];
    let (lo, hi) = quadratic_range(&nodal);
    if lo >= 0.0 || hi <= 0.0 {
        out.push(Leaf { tri: *s, above: None });
        return;
    }
    let mixed = !(phi.iter().all(|&v| v >= 0.0) || phi.iter().all(|&v| v <= 0.0));
    // split points on the curve itself, not on its linear interpolant
    let crossing = |k: usize, j: usize| {
        let on_edge = |t: f64| quadratic_at(q, std::array::from_fn(|c| (1.0 - t) * s[k][c] + t * s[j][c]));
        let (mut a, mut b) = (0.0, 1.0);
        let below = phi[k] < 0.0;
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if (on_edge(m) < 0.0) == below { a = m } else { b = m }
        }
        0.5 * (a + b)
    };
    // a flagged leaf is refined all the way down, so that the finest level
    // moves with `depth` and consecutive depths never coincide
    let refine = extra > 0 && (forced || !mixed || edge_reentry(&nodal) || chord_strays(q, s, &phi, &crossing));
    if mixed && !refine {
        out.extend(
            split_with(phi, crossing)
                .into_iter()
                .map(|(p, above)| Leaf { tri: p.map(|l| bary_map(s, l)), above: Some(above) }),
        );
    } else if !refine {
        out.push(Leaf { tri: *s, above: None });
    } else {
        for child in [[s[0], m01, m20], [m01, s[1], m12], [m20, m12, s[2]], [m01, m12, m20]] {
            refine_leaf(q, &child, extra - 1, true, out);
        }
    }
}

/// Whether the curve bulges away from its chord by as much as the leaf
/// corners stand off it, as for a thin lens cut off near one corner.
fn chord_strays(q: &[f64; 6], s: &BaryTriangle, phi: &[f64; 3], crossing: &impl Fn(usize, usize) -> f64) -> bool {
    let mut ends: Vec<[f64; 3]> = Vec::with_capacity(3);
    for k in 0..3 {
        let j = (k + 1) % 3;
        if phi[k] == 0.0 {
            ends.push(s[k]);
        } else if phi[k] * phi[j] < 0.0 {
            let t = crossing(k, j);
            ends.push(std::array::from_fn(|c| (1.0 - t) * s[k][c] + t * s[j][c]));
        }
    }
    if ends.len() < 2 {
        return false;
    }
    let mid = std::array::from_fn(|c| 0.5 * (ends[0][c] + ends[1][c]));
    let pos = phi.iter().copied().fold(0.0, f64::max);
    let neg = -phi.iter().copied().fold(0.0, f64::min);
    quadratic_at(q, mid).abs() > 0.25 * pos.min(neg)
}

/// Whether the curve crosses some edge twice, which a single chord cannot follow.
fn edge_reentry(nodal: &[f64; 6]) -> bool {
    [(0, 1, 3), (1, 2, 4), (2, 0, 5)].iter().any(|&(a, b, m)| {
        let (pa, pb, pm) = (nodal[a], nodal[b], nodal[m]);
        (pa > 0.0 && pb > 0.0 && -edge_quadratic_max(-pa, -pb, -pm) < 0.0)
            || (pa < 0.0 && pb < 0.0 && edge_quadratic_max(pa, pb, pm) > 0.0)
    })
}

/// Value at `l` of the quadratic with nodal values `q` (see [`Pieces::SubdivideAlong`]).
pub fn quadratic_at(q: &[f64; 6], l: [f64; 3]) -> f64 {
    let mut v = 0.0;
    for k in 0..3 {
        v += q[k] * l[k] * (2.0 * l[k] - 1.0);
        v += q[3 + k] * 4.0 * l[k] * l[(k + 1) % 3];
    }
    v
}

/// Splits the reference triangle along the zero line of the linear function
/// with vertex values `phi`, fan-triangulating both sides.
pub fn split_linear(phi: [f64; 3]) -> Vec<BaryTriangle> {
    split_with(phi, |k, j| phi[k] / (phi[k] - phi[j])).into_iter().map(|(p, _)| p).collect()
}

/// As [`split_linear`], with the crossing on edge `(k, j)` at fraction
/// `crossing(k, j)` from `k`. Pieces are tagged with whether they lie above.
fn split_with(phi: [f64; 3], crossing: impl Fn(usize, usize) -> f64) -> Vec<(BaryTriangle, bool)> {
    let corner = |k: usize| {
        let mut b = [0.0; 3];
        b[k] = 1.0;
        b
    };
    let mut below: Vec<[f64; 3]> = Vec::with_capacity(4);
    let mut above: Vec<[f64; 3]> = Vec::with_capacity(4);
    for k in 0..3 {
        let j = (k + 1) % 3;
        let (dk, dj) = (phi[k], phi[j]);
        if dk <= 0.0 {
            below.push(corner(k));
        }
        if dk >= 0.0 {
            above.push(corner(k));
        }
        if dk * dj < 0.0 {
            let s = crossing(k, j);
            let mut p = [0.0; 3];
            p[k] = 1.0 - s;
            p[j] = s;
            below.push(p);
            above.push(p);
        }
    }
    let mut out = Vec::with_capacity(4);
    for (poly, side) in [(below, false), (above, true)] {
        for i in 1..poly.len().saturating_sub(1) {
            out.push(([poly[0], poly[i], poly[i + 1]], side));
        }
    }
    out
}

pub const MIN_DEPTH: usize = 2;
pub const MAX_DEPTH: usize = 10;
pub const DEFAULT_DEPTH: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
}

impl std::ops::Add for Integral {
    type Output = Integral;
    fn add(self, o: Integral) -> Integral {
        Integral { value: self.value + o.value, error_estimate: self.error_estimate + o.error_estimate }
    }
}

/// Maps barycentric coordinates relative to `sub` to coordinates relative to its parent.
pub fn bary_map(sub: &BaryTriangle, l: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        for (c, o) in out.iter_mut().enumerate() {
            *o += l[k] * sub[k][c];
        }
    }
    out
}

/// Area of a barycentric sub-triangle relative to its parent.
pub fn bary_area_fraction(sub: &BaryTriangle) -> f64 {
    let (a, b, c) = (sub[0], sub[1], sub[2]);
    ((b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2])).abs()
}

/// Visits the `4^depth` sub-triangles of a uniform subdivision of the reference triangle.
pub fn for_each_uniform(depth: usize, mut visit: impl FnMut(&BaryTriangle)) {
    let n = 1usize << depth;
    let nf = n as f64;
    let node = |i: usize, j: usize| {
        let (x, y) = (i as f64 / nf, j as f64 / nf);
        [1.0 - x - y, x, y]
    };
    for j in 0..n {
        for i in 0..n - j {
            visit(&[node(i, j), node(i + 1, j), node(i, j + 1)]);
            if i + j + 1 < n {
                visit(&[node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
            }
        }
    }
}

pub fn uniform_subdivision(depth: usize) -> Vec<BaryTriangle> {
    let mut out = Vec::with_capacity(1 << (2 * depth));
    for_each_uniform(depth, |s| out.push(*s));
    out
}

/// Maximum over `[0, 1]` of the quadratic with values `a`, `m`, `b` at 0, 1/2, 1.
pub fn edge_quadratic_max(a: f64, b: f64, m: f64) -> f64 {
    let quad = 2.0 * a + 2.0 * b - 4.0 * m;
    let lin = -3.0 * a - b + 4.0 * m;
    let mut best = a.max(b);
    if quad < 0.0 {
        let s = -lin / (2.0 * quad);
        if s > 0.0 && s < 1.0 {
            best = best.max(a + lin * s + quad * s * s);
        }
    }
    best
}

/// Exact range `(min, max)` of a P2 polynomial on a triangle, given its
/// values at the vertices and at the edge midpoints (local P2 ordering).
pub fn quadratic_range(u: &[f64]) -> (f64, f64) {
    let edges = [(u[0], u[1], u[3]), (u[1], u[2], u[4]), (u[2], u[0], u[5])];
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (a, b, m) in edges {
        hi = hi.max(edge_quadratic_max(a, b, m));
        lo = lo.min(-edge_quadratic_max(-a, -b, -m));
    }
    // q(s, t) = a0 + b s + c t + d s^2 + e s t + f t^2 on the reference triangle
    let a0 = u[0];
    let b = 4.0 * u[3] - 3.0 * u[0] - u[1];
    let d = 2.0 * u[1] + 2.0 * u[0] - 4.0 * u[3];
    let c = 4.0 * u[5] - 3.0 * u[0] - u[2];
    let f = 2.0 * u[2] + 2.0 * u[0] - 4.0 * u[5];
    let e = 4.0 * (u[4] - a0 - 0.5 * b - 0.5 * c - 0.25 * d - 0.25 * f);
    let det = 4.0 * d * f - e * e;
    if det.abs() > 1e-300 {
        let s = (-b * 2.0 * f + c * e) / det;
        let t = (-c * 2.0 * d + b * e) / det;
        if s > 0.0 && t > 0.0 && s + t < 1.0 {
            let v = a0 + b * s + c * t + d * s * s + e * s * t + f * t * t;
            hi = hi.max(v);
            lo = lo.min(v);
        }
    }
    (lo, hi)
}

/// Composite integrator with fixed quadrature degree and subdivision depth.
#[derive(Clone, Debug)]
pub struct Integrator {
    depth: usize,
    rule: QuadratureRule,
}

impl Integrator {
    pub fn new(degree: usize, depth: usize) -> Result<Self> {
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
            return Err(Error::Config(format!(
                "subdivision depth {depth} outside [{MIN_DEPTH}, {MAX_DEPTH}]"
            )));
        }
        Ok(Integrator { depth, rule: quadrature(degree)? })
    }

    pub fn degree(&self) -> usize {
        self.rule.degree
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Integrates `f(t, bary, x)` over the mesh.
    pub fn integrate<P, F>(&self, mesh: &Mesh, pieces: P, f: F) -> Integral
    where
        P: Fn(usize) -> Pieces + Sync,
        F: Fn(usize, [f64; 3], Point, Option<Branch>) -> f64 + Sync,
    {
        let per_triangle: Vec<Integral> = (0..mesh.triangle_count())
            .into_par_iter()
            .map(|t| self.integrate_triangle(mesh, t, &pieces(t), &f))
            .collect();
        per_triangle.into_iter().fold(Integral::default(), |a, b| a + b)
    }

    pub fn integrate_triangle<F>(&self, mesh: &Mesh, t: usize, pieces: &Pieces, f: &F) -> Integral
    where
        F: Fn(usize, [f64; 3], Point, Option<Branch>) -> f64,
    {
        let area = mesh.signed_area(t);
        // sum over the rule mapped onto one sub-triangle, in units of the parent area
        let on_branch = |sub: &BaryTriangle, branch: Option<Branch>| -> f64 {
            let frac = bary_area_fraction(sub);
            if frac == 0.0 {
                return 0.0;
            }
            2.0 * frac
                * self
                    .rule
                    .iter()
                    .map(|(p, w)| {
                        let l = bary_map(sub, p);
                        w * f(t, l, mesh.point_at(t, l), branch)
                    })
                    .sum::<f64>()
        };
        let on_sub = |sub: &BaryTriangle| on_branch(sub, None);
        let reference = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        match pieces {
            Pieces::Whole => Integral { value: area * on_sub(&reference), error_estimate: 0.0 },
            Pieces::Split(subs) => Integral {
                value: area * subs.iter().map(&on_sub).sum::<f64>(),
                error_estimate: 0.0,
            },
            Pieces::Subdivide => {
                let mut fine = 0.0;
                for_each_uniform(self.depth, |s| fine += on_sub(s));
                let mut coarse = 0.0;
                for_each_uniform(self.depth - 1, |s| coarse += on_sub(s));
                let (fine, coarse) = (area * fine, area * coarse);
                Integral { value: fine, error_estimate: (fine - coarse).abs() }
            }
            Pieces::SubdivideAlong(curve) => {
                let sum = |leaves: Vec<Leaf>| -> f64 {
                    leaves.iter().map(|s| on_branch(&s.tri, s.above.map(|above| Branch { curve, above }))).sum()
                };
                let fine = area * sum(pieces.leaves(self.depth));
                let coarse = area * sum(pieces.leaves(self.depth - 1));
                Integral { value: fine, error_estimate: (fine - coarse).abs() }
            }
        }
    }
}
