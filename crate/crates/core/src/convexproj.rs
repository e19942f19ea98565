//! Closest-point projection of two-component fields onto the convex hull of
//! their boundary values.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FESpace};
use crate::integrate::{Integral, Integrator, Pieces, DEFAULT_DEPTH};

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
const ZERO: Mat2 = [[0.0, 0.0], [0.0, 0.0]];

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn dist(a: Vec2, b: Vec2) -> f64 {
    let d = sub(a, b);
    dot(d, d).sqrt()
}

/// A compact convex subset of the plane.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexRegion {
    Point(Vec2),
    Segment(Vec2, Vec2),
    /// Vertices in counterclockwise order, strictly convex.
    Polygon(Vec<Vec2>),
}

/// Closest point on segment `[a, b]` and whether it lies strictly inside it.
fn segment_foot(a: Vec2, b: Vec2, x: Vec2) -> (Vec2, bool) {
    let e = sub(b, a);
    let s = dot(sub(x, a), e) / dot(e, e);
    if s <= 0.0 {
        (a, false)
    } else if s >= 1.0 {
        (b, false)
    } else {
        ([a[0] + s * e[0], a[1] + s * e[1]], true)
    }
}

fn tangent_projector(a: Vec2, b: Vec2) -> Mat2 {
    let e = sub(b, a);
    let l2 = dot(e, e);
    [
        [e[0] * e[0] / l2, e[0] * e[1] / l2],
        [e[1] * e[0] / l2, e[1] * e[1] / l2],
    ]
}

impl ConvexRegion {
    /// Convex hull of a point set. Points closer than `1e-12 x diameter` to a
    /// hull edge line are treated as collinear; rank-deficient sets collapse
    /// to a segment or a point.
    pub fn hull(points: &[Vec2]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Data("convex hull of an empty point set".into()));
        }
        if let Some(p) = points.iter().find(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Data(format!("non-finite point {p:?}")));
        }
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        let mut diam: f64 = 0.0;
        for p in &pts {
            diam = diam.max(dist(*p, first)).max(dist(*p, last));
        }
        let tol = 1e-12 * diam;
        if diam == 0.0 || pts.len() == 1 {
            return Ok(ConvexRegion::Point(first));
        }
        // a point is kept only if it lies more than `tol` left of the chord
        let keep = |a: Vec2, b: Vec2, p: Vec2| cross(sub(b, a), sub(p, a)) > tol * dist(a, b);
        let mut chain: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
        for pass in 0..2 {
            let start = chain.len();
            let iter: Box<dyn Iterator<Item = &Vec2>> =
                if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
            for &p in iter {
                while chain.len() >= start + 2 && !keep(chain[chain.len() - 2], chain[chain.len() - 1], p) {
                    chain.pop();
                }
                chain.push(p);
            }
            chain.pop();
        }
        Ok(match chain.len() {
            0 | 1 => ConvexRegion::Point(first),
            2 => {
                let (a, b) = (chain[0], chain[1]);
                if dist(a, b) <= tol { ConvexRegion::Point(a) } else { ConvexRegion::Segment(a, b) }
            }
            _ => ConvexRegion::Polygon(chain),
        })
    }

    pub fn vertices(&self) -> Vec<Vec2> {
        match self {
            ConvexRegion::Point(p) => vec![*p],
            ConvexRegion::Segment(a, b) => vec![*a, *b],
            ConvexRegion::Polygon(v) => v.clone(),
        }
    }

    pub fn form(&self) -> &'static str {
        match self {
            ConvexRegion::Point(_) => "point",
            ConvexRegion::Segment(..) => "segment",
            ConvexRegion::Polygon(_) => "polygon",
        }
    }

    /// True when `x` is in the region up to distance `tol`.
    pub fn contains(&self, x: Vec2, tol: f64) -> bool {
        match self {
            ConvexRegion::Polygon(v) => (0..v.len()).all(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                cross(sub(b, a), sub(x, a)) >= -tol * dist(a, b)
            }),
            _ => dist(self.project(x), x) <= tol,
        }
    }

    /// Closest point of the region.
    pub fn project(&self, x: Vec2) -> Vec2 {
        self.project_with_jacobian(x).0
    }

    /// Closest point and the derivative of the projection at `x`: identity
    /// in the interior, the tangent projector on an edge, zero at a vertex.
    pub fn project_with_jacobian(&self, x: Vec2) -> (Vec2, Mat2) {
        match self {
            ConvexRegion::Point(p) => (*p, ZERO),
            ConvexRegion::Segment(a, b) => {
                let (y, inner) = segment_foot(*a, *b, x);
                (y, if inner { tangent_projector(*a, *b) } else { ZERO })
            }
            ConvexRegion::Polygon(v) => {
                let n = v.len();
                let outside = (0..n).any(|i| cross(sub(v[(i + 1) % n], v[i]), sub(x, v[i])) < 0.0);
                if !outside {
                    return (x, IDENTITY);
                }
                let mut best = (f64::INFINITY, x, ZERO);
                for i in 0..n {
                    let (a, b) = (v[i], v[(i + 1) % n]);
                    let (y, inner) = segment_foot(a, b, x);
                    let d = dist(x, y);
                    if d < best.0 {
                        best = (d, y, if inner { tangent_projector(a, b) } else { ZERO });
                    }
                }
                (best.1, best.2)
            }
        }
    }
}

fn require_p1_vector(u: &FEFunction) -> Result<()> {
    if u.components() != 2 {
        return Err(Error::Unsupported(format!(
            "convex projection needs a 2-component field, got {} components",
            u.components()
        )));
    }
    if u.space().degree() != 1 {
        return Err(Error::Unsupported(
            "boundary hulls are only exact for degree-1 vector fields".into(),
        ));
    }
    Ok(())
}

/// Convex hull of the boundary values of a P1 vector field, optionally
/// together with the origin.
pub fn boundary_hull(u: &FEFunction, include_origin: bool) -> Result<ConvexRegion> {
    require_p1_vector(u)?;
    let boundary = u.mesh().boundary_vertices();
    if boundary.is_empty() {
        return Err(Error::Precondition("mesh has no boundary vertices".into()));
    }
    let c = u.coefficients();
    let mut pts: Vec<Vec2> = boundary.iter().map(|&v| [c[2 * v], c[2 * v + 1]]).collect();
    if include_origin {
        pts.push([0.0, 0.0]);
    }
    ConvexRegion::hull(&pts)
}

/// `x -> proj_K U(x)` for a P1 vector field `U`.
#[derive(Clone, Debug)]
pub struct ProjectedField {
    base: FEFunction,
    region: ConvexRegion,
    depth: usize,
}

pub fn make_projected(u: &FEFunction, include_origin: bool) -> Result<ProjectedField> {
    let region = boundary_hull(u, include_origin)?;
    ProjectedField::onto(u, region)
}

impl ProjectedField {
    /// Projection onto an arbitrary region.
    pub fn onto(base: &FEFunction, region: ConvexRegion) -> Result<Self> {
        require_p1_vector(base)?;
        Ok(ProjectedField { base: base.clone(), region, depth: DEFAULT_DEPTH })
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn base(&self) -> &FEFunction {
        &self.base
    }

    pub fn region(&self) -> &ConvexRegion {
        &self.region
    }

    pub fn space(&self) -> &Arc<FESpace> {
        self.base.space()
    }

    fn base_value(&self, t: usize, bary: [f64; 3]) -> Vec2 {
        [self.base.component_value(t, bary, 0), self.base.component_value(t, bary, 1)]
    }

    pub fn value_in(&self, t: usize, bary: [f64; 3]) -> Vec2 {
        self.region.project(self.base_value(t, bary))
    }

    /// Rows are the gradients of the two components.
    pub fn gradient_in(&self, t: usize, bary: [f64; 3]) -> Mat2 {
        let (_, jac) = self.region.project_with_jacobian(self.base_value(t, bary));
        let g0 = self.base.component_gradient(t, bary, 0);
        let g1 = self.base.component_gradient(t, bary, 1);
        let mut out = ZERO;
        for r in 0..2 {
            for k in 0..2 {
                out[r][k] = jac[r][0] * g0[k] + jac[r][1] * g1[k];
            }
        }
        out
    }

    /// Whole when the projection is smooth on `t`: a point region, or a polygon
    /// containing every vertex value (hence the whole image of the triangle).
    pub fn pieces(&self, t: usize) -> Pieces {
        let dofs = self.space().dofs(t);
        let c = self.base.coefficients();
        let inside = match &self.region {
            ConvexRegion::Point(_) => true,
            ConvexRegion::Segment(..) => false,
            ConvexRegion::Polygon(_) => dofs.iter().all(|&d| self.region.contains([c[2 * d], c[2 * d + 1]], 0.0)),
        };
        if inside { Pieces::Whole } else { Pieces::Subdivide }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorIntegrand {
    /// `int |grad U*|^2` (Frobenius norm)
    DirichletEnergy,
    /// `int |U*|^2`
    L2Squared,
}

pub fn integrate_projected(field: &ProjectedField, kind: VectorIntegrand) -> Result<Integral> {
    let integrator = Integrator::new(4, field.depth)?;
    let mesh = field.space().mesh();
    Ok(match kind {
        VectorIntegrand::DirichletEnergy => integrator.integrate(mesh, |t| field.pieces(t), |t, l, _, _| {
            let g = field.gradient_in(t, l);
            g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]
        }),
        VectorIntegrand::L2Squared => integrator.integrate(mesh, |t| field.pieces(t), |t, l, _, _| {
            let v = field.value_in(t, l);
            v[0] * v[0] + v[1] * v[1]
        }),
    })
}

/// Unprojected counterpart of [`integrate_projected`].
pub fn integrate_vector(u: &FEFunction, kind: VectorIntegrand) -> Result<Integral> {
    let integrator = Integrator::new(4, DEFAULT_DEPTH)?;
    let m = u.components();
    Ok(integrator.integrate(u.mesh(), |_| Pieces::Whole, |t, l, _, _| {
        (0..m)
            .map(|c| match kind {
                VectorIntegrand::DirichletEnergy => {
                    let g = u.component_gradient(t, l, c);
                    g[0] * g[0] + g[1] * g[1]
                }
                VectorIntegrand::L2Squared => u.component_value(t, l, c).powi(2),
            })
            .sum()
    }))
}
