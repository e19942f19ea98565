//! Scalar fields living on a finite-element space, possibly non-polynomial
//! (truncated fields) and evaluable from foreign meshes through point location.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FESpace};
use crate::integrate::{BaryTriangle, Branch, Integral, Integrator, Pieces, DEFAULT_DEPTH};
use crate::mesh::{barycentric, Point, PointLocator};

pub trait ScalarField: Sync {
    /// Space whose mesh the field is defined on.
    fn space(&self) -> &Arc<FESpace>;

    fn value_in(&self, t: usize, bary: [f64; 3]) -> f64;

    fn gradient_in(&self, t: usize, bary: [f64; 3]) -> [f64; 2];

    /// Value on the given side of a curve reported by [`ScalarField::pieces`].
    fn value_on(&self, t: usize, bary: [f64; 3], _branch: Option<Branch>) -> f64 {
        self.value_in(t, bary)
    }

    fn gradient_on(&self, t: usize, bary: [f64; 3], _branch: Option<Branch>) -> [f64; 2] {
        self.gradient_in(t, bary)
    }

    /// Integration hint for triangle `t`.
    fn pieces(&self, _t: usize) -> Pieces {
        Pieces::Whole
    }

    /// Subdivision depth for triangles reported as [`Pieces::Subdivide`].
    fn subdivision_depth(&self) -> usize {
        DEFAULT_DEPTH
    }
}

impl ScalarField for FEFunction {
    fn space(&self) -> &Arc<FESpace> {
        FEFunction::space(self)
    }

    fn value_in(&self, t: usize, bary: [f64; 3]) -> f64 {
        debug_assert_eq!(self.components(), 1);
        self.component_value(t, bary, 0)
    }

    fn gradient_in(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        self.component_gradient(t, bary, 0)
    }
}

/// `field` integrated on the pieces of `pattern`, so that two fields can be
/// compared with identical quadrature points.
pub struct Repieced<'a, F, P> {
    pub field: &'a F,
    pub pattern: &'a P,
}

impl<F: ScalarField, P: ScalarField> ScalarField for Repieced<'_, F, P> {
    fn space(&self) -> &Arc<FESpace> {
        self.field.space()
    }

    fn value_in(&self, t: usize, bary: [f64; 3]) -> f64 {
        self.field.value_in(t, bary)
    }

    fn gradient_in(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        self.field.gradient_in(t, bary)
    }

    fn value_on(&self, t: usize, bary: [f64; 3], branch: Option<Branch>) -> f64 {
        self.field.value_on(t, bary, branch)
    }

    fn gradient_on(&self, t: usize, bary: [f64; 3], branch: Option<Branch>) -> [f64; 2] {
        self.field.gradient_on(t, bary, branch)
    }

    fn pieces(&self, t: usize) -> Pieces {
        self.field.pieces(t).combine(self.pattern.pieces(t))
    }

    fn subdivision_depth(&self) -> usize {
        self.field.subdivision_depth().max(self.pattern.subdivision_depth())
    }
}

/// A scalar field paired with a point locator on its mesh.
pub struct Located<F> {
    pub field: F,
    locator: PointLocator,
}

impl<F: ScalarField> Located<F> {
    pub fn new(field: F) -> Self {
        let locator = PointLocator::new(field.space().mesh());
        Located { field, locator }
    }

    /// `(triangle, barycentric)` of `x`, or `None` outside the mesh.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        self.locator.locate(self.field.space().mesh(), x)
    }

    pub fn value_at(&self, x: Point) -> Option<f64> {
        self.locate(x).map(|(t, b)| self.field.value_in(t, b))
    }

    pub fn gradient_at(&self, x: Point) -> Option<[f64; 2]> {
        self.locate(x).map(|(t, b)| self.field.gradient_in(t, b))
    }
}

impl<F: ScalarField> std::fmt::Debug for Located<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Located").field("dofs", &self.field.space().dof_count()).finish()
    }
}

/// Sample grid of `n x n` points covering the closed unit square.
pub fn sample_grid(n: usize) -> Vec<Point> {
    let step = 1.0 / (n.max(2) - 1) as f64;
    (0..n)
        .flat_map(|j| (0..n).map(move |i| [i as f64 * step, j as f64 * step]))
        .collect()
}

/// Values and gradients of two fields at one point.
#[derive(Clone, Copy, Debug)]
pub struct PairSample {
    pub a: f64,
    pub grad_a: [f64; 2],
    pub b: f64,
    pub grad_b: [f64; 2],
    pub x: Point,
}

fn same_mesh(a: &FESpace, b: &FESpace) -> bool {
    std::ptr::eq(a.mesh(), b.mesh()) || a.mesh() == b.mesh()
}

/// `int q(a, b)` for two fields on the same mesh, using the finer of their
/// integration hints on every triangle.
pub fn integrate_pair<A, B, Q>(a: &A, b: &B, degree: usize, q: Q) -> Result<Integral>
where
    A: ScalarField,
    B: ScalarField,
    Q: Fn(&PairSample) -> f64 + Sync,
{
    if !same_mesh(a.space(), b.space()) {
        return Err(Error::Precondition("fields live on different meshes".into()));
    }
    let depth = a.subdivision_depth().max(b.subdivision_depth());
    let integrator = Integrator::new(degree, depth)?;
    Ok(integrator.integrate(
        a.space().mesh(),
        |t| a.pieces(t).combine(b.pieces(t)),
        |t, l, x, branch| {
            q(&PairSample {
                a: a.value_on(t, l, branch),
                grad_a: a.gradient_on(t, l, branch),
                b: b.value_on(t, l, branch),
                grad_b: b.gradient_on(t, l, branch),
                x,
            })
        },
    ))
}

/// Clips a convex CCW polygon to a CCW triangle.
fn clip_to_triangle(poly: &[Point], tri: &[Point; 3]) -> Vec<Point> {
    let mut cur = poly.to_vec();
    for k in 0..3 {
        let (a, b) = (tri[k], tri[(k + 1) % 3]);
        let side = |p: Point| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let mut next = Vec::with_capacity(cur.len() + 1);
        for i in 0..cur.len() {
            let (p, q) = (cur[i], cur[(i + 1) % cur.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                next.push(p);
            }
            if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
                let s = sp / (sp - sq);
                next.push([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]);
            }
        }
        if next.len() < 3 {
            return Vec::new();
        }
        cur = next;
    }
    cur
}

fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// `int q(host, reference)` over the host mesh, with the reference living on
/// another mesh. Smooth host pieces are intersected exactly with the
/// reference triangles, so both fields are polynomial on every quadrature
/// cell; subdivided host triangles are refined to
/// `depth` first and carry an error estimate.
pub fn integrate_against<H, R, Q>(host: &H, reference: &Located<R>, degree: usize, depth: usize, q: Q) -> Result<Integral>
where
    H: ScalarField,
    R: ScalarField,
    Q: Fn(&PairSample) -> f64 + Sync,
{
    use rayon::prelude::*;

    let integrator = Integrator::new(degree, depth)?;
    let rule = integrator.rule();
    let hmesh = host.space().mesh();
    let rmesh = reference.field.space().mesh();
    let per_triangle: Vec<Result<Integral>> = (0..hmesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            let corners = hmesh.triangle_points(t);
            let physical = |b: &BaryTriangle| -> [Point; 3] {
                let mut out = [[0.0; 2]; 3];
                for (o, l) in out.iter_mut().zip(b) {
                    for k in 0..3 {
                        o[0] += l[k] * corners[k][0];
                        o[1] += l[k] * corners[k][1];
                    }
                }
                if triangle_area(out[0], out[1], out[2]) < 0.0 {
                    out.swap(1, 2);
                }
                out
            };
            let piece = |b: &BaryTriangle, branch: Option<Branch>| -> Result<f64> {
                let tri = physical(b);
                let area = triangle_area(tri[0], tri[1], tri[2]);
                if area <= 0.0 {
                    return Ok(0.0);
                }
                let lo = [tri[0][0].min(tri[1][0]).min(tri[2][0]), tri[0][1].min(tri[1][1]).min(tri[2][1])];
                let hi = [tri[0][0].max(tri[1][0]).max(tri[2][0]), tri[0][1].max(tri[1][1]).max(tri[2][1])];
                let (mut sum, mut covered) = (0.0, 0.0);
                for rt in reference.locator.candidates(lo, hi) {
                    let clip = clip_to_triangle(&tri, &rmesh.triangle_points(rt));
                    for i in 1..clip.len().saturating_sub(1) {
                        let (a, b, c) = (clip[0], clip[i], clip[i + 1]);
                        let sub_area = triangle_area(a, b, c);
                        if sub_area <= 0.0 {
                            continue;
                        }
                        covered += sub_area;
                        let mut local = 0.0;
                        for (l, w) in rule.iter() {
                            let x = [
                                l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                                l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
                            ];
                            let hl = barycentric(hmesh, t, x);
                            let rl = barycentric(rmesh, rt, x);
                            local += w * q(&PairSample {
                                a: host.value_on(t, hl, branch),
                                grad_a: host.gradient_on(t, hl, branch),
                                b: reference.field.value_in(rt, rl),
                                grad_b: reference.field.gradient_in(rt, rl),
                                x,
                            });
                        }
                        sum += 2.0 * sub_area * local;
                    }
                }
                if (covered - area).abs() > 1e-9 * area {
                    return Err(Error::Precondition(format!(
                        "reference mesh covers {covered:e} of a host piece of area {area:e}"
                    )));
                }
                Ok(sum)
            };
            match host.pieces(t) {
                Pieces::Whole => Ok(Integral { value: piece(&WHOLE, None)?, error_estimate: 0.0 }),
                Pieces::Split(subs) => {
                    let mut v = 0.0;
                    for s in &subs {
                        v += piece(s, None)?;
                    }
                    Ok(Integral { value: v, error_estimate: 0.0 })
                }
                p => {
                    let level = |d: usize| -> Result<f64> {
                        let mut v = 0.0;
                        for s in p.leaves(d) {
                            let branch = match (&p, s.above) {
                                (Pieces::SubdivideAlong(curve), Some(above)) => Some(Branch { curve, above }),
                                _ => None,
                            };
                            v += piece(&s.tri, branch)?;
                        }
                        Ok(v)
                    };
                    let (fine, coarse) = (level(depth)?, level(depth - 1)?);
                    Ok(Integral { value: fine, error_estimate: (fine - coarse).abs() })
                }
            }
        })
        .collect();
    let mut total = Integral::default();
    for r in per_triangle {
        total = total + r?;
    }
    Ok(total)
}

const WHOLE: BaryTriangle = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
