//! Truncation of a scalar finite-element field at the supremum of its boundary
//! trace.
//!
//! For a discrete field `U` the level is `M = sup_{boundary} U+` (or the plain
//! boundary supremum when the operator has no reaction term) and the
//! truncated field is `U* = min(U, M)`. `U*` is kept as a lazily evaluated
//! field: interpolating it back into the finite-element space would destroy
//! the pointwise relations `U* <= U`, `|U*| <= |U|` and `|grad U*| <= |grad U|`.
//!
//! Integrals of `U*` are exact on P1 meshes: a cut triangle is split along
//! the straight level line into two convex polygons, on each of which `U*`
//! is polynomial. For P2 the level set is a conic; cut triangles are
//! subdivided, leaves crossed by the conic are split along chords through its
//! exact edge roots, and the difference between the last two subdivision
//! levels is reported as an error estimate.

use std::sync::Arc;

use crate::assembly::ScalarFunction;
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FESpace};
use crate::field::{Located, ScalarField};
pub use crate::integrate::{edge_quadratic_max, quadratic_range};
use crate::integrate::{split_linear, BaryTriangle, Branch, Integral, Integrator, Pieces, DEFAULT_DEPTH};
use crate::mesh::Point;
use crate::quadrature::quadrature;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CutoffMode {
    /// `M = max(0, sup U)`: operators with a nonnegative reaction term.
    PositivePartSup,
    /// `M = sup U`: pure diffusion operators.
    PlainSup,
}

impl CutoffMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CutoffMode::PositivePartSup => "positive_part_sup",
            CutoffMode::PlainSup => "plain_sup",
        }
    }
}

fn require_scalar(u: &FEFunction) -> Result<()> {
    if u.components() != 1 {
        return Err(Error::Unsupported(format!(
            "{}-component field; vector fields are handled by convex projection",
            u.components()
        )));
    }
    Ok(())
}

/// Exact supremum of the boundary trace of a scalar field.
pub fn sup_boundary(u: &FEFunction, mode: CutoffMode) -> Result<f64> {
    require_scalar(u)?;
    let space = u.space();
    let mesh = space.mesh();
    if mesh.boundary_edges().is_empty() {
        return Err(Error::Precondition("mesh has no boundary edges".into()));
    }
    let c = u.coefficients();
    let mut sup = f64::NEG_INFINITY;
    for e in mesh.boundary_edges() {
        let [a, b] = e.vertices;
        sup = sup.max(match space.degree() {
            1 => c[a].max(c[b]),
            _ => {
                let m = space.edge_dof(a, b).expect("P2 boundary edge has a midpoint dof");
                edge_quadratic_max(c[a], c[b], c[m])
            }
        });
    }
    Ok(match mode {
        CutoffMode::PositivePartSup => sup.max(0.0),
        CutoffMode::PlainSup => sup,
    })
}

/// The truncated field `min(U, level)`.
#[derive(Clone, Debug)]
pub struct CutoffField {
    base: FEFunction,
    level: f64,
    mode: CutoffMode,
    depth: usize,
}

/// `U* = min(U, sup_boundary(U, mode))`.
pub fn make_cutoff(u: &FEFunction, mode: CutoffMode) -> Result<CutoffField> {
    let level = sup_boundary(u, mode)?;
    Ok(CutoffField { base: u.clone(), level, mode, depth: DEFAULT_DEPTH })
}

impl CutoffField {
    /// Truncation at an arbitrary level (not tied to the boundary trace).
    pub fn at_level(base: &FEFunction, level: f64) -> Result<Self> {
        require_scalar(base)?;
        Ok(CutoffField {
            base: base.clone(),
            level,
            mode: CutoffMode::PlainSup,
            depth: DEFAULT_DEPTH,
        })
    }

    /// Subdivision depth used for cut P2 triangles.
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn base(&self) -> &FEFunction {
        &self.base
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn mode(&self) -> CutoffMode {
        self.mode
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn local_values(&self, t: usize) -> Vec<f64> {
        let c = self.base.coefficients();
        self.base.space().dofs(t).iter().map(|&d| c[d]).collect()
    }

    /// True when `U > level` somewhere on triangle `t`.
    pub fn is_active(&self, t: usize) -> bool {
        let u = self.local_values(t);
        let hi = match self.base.space().degree() {
            1 => u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            _ => quadratic_range(&u).1,
        };
        hi > self.level
    }

    /// Integrand-smooth pieces of triangle `t`.
    fn split(&self, t: usize) -> Pieces {
        let u = self.local_values(t);
        let m = self.level;
        match self.base.space().degree() {
            1 => {
                let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
                if hi <= m || lo >= m {
                    Pieces::Whole
                } else {
                    Pieces::Split(split_p1([u[0], u[1], u[2]], m))
                }
            }
            _ => {
                let (lo, hi) = quadratic_range(&u);
                if hi <= m || lo >= m {
                    Pieces::Whole
                } else {
                    let mut q = [0.0; 6];
                    for (o, v) in q.iter_mut().zip(&u) {
                        *o = v - m;
                    }
                    Pieces::SubdivideAlong(q)
                }
            }
        }
    }

    /// Whether the point takes the truncated branch. A branch label is only
    /// trusted when it refers to this field's own curve on `t`.
    fn is_above(&self, t: usize, bary: [f64; 3], branch: Option<Branch>) -> bool {
        if let Some(b) = branch {
            if let Pieces::SubdivideAlong(q) = self.split(t) {
                if &q == b.curve {
                    return b.above;
                }
            }
        }
        self.base.component_value(t, bary, 0) > self.level
    }

    /// Quadrature degree that integrates squared P-k quantities exactly.
    fn integration_degree(&self) -> usize {
        match self.base.space().degree() {
            1 => 4,
            _ => 6,
        }
    }

    pub fn integrator(&self) -> Result<Integrator> {
        Integrator::new(self.integration_degree(), self.depth)
    }
}

impl ScalarField for CutoffField {
    fn space(&self) -> &Arc<FESpace> {
        self.base.space()
    }

    fn value_in(&self, t: usize, bary: [f64; 3]) -> f64 {
        self.base.component_value(t, bary, 0).min(self.level)
    }

    fn gradient_in(&self, t: usize, bary: [f64; 3]) -> [f64; 2] {
        self.gradient_on(t, bary, None)
    }

    fn value_on(&self, t: usize, bary: [f64; 3], branch: Option<Branch>) -> f64 {
        if self.is_above(t, bary, branch) {
            self.level
        } else {
            self.base.component_value(t, bary, 0)
        }
    }

    fn gradient_on(&self, t: usize, bary: [f64; 3], branch: Option<Branch>) -> [f64; 2] {
        if self.is_above(t, bary, branch) {
            [0.0, 0.0]
        } else {
            self.base.component_gradient(t, bary, 0)
        }
    }

    fn pieces(&self, t: usize) -> Pieces {
        self.split(t)
    }

    fn subdivision_depth(&self) -> usize {
        self.depth
    }
}

/// Splits a P1 triangle with vertex values `u` along `{U = m}`.
fn split_p1(u: [f64; 3], m: f64) -> Vec<BaryTriangle> {
    split_linear(u.map(|v| v - m))
}

/// Integrated quantity of a truncated field.
#[derive(Clone, Debug)]
pub enum CutIntegrand {
    /// `int |grad U*|^2`
    DirichletEnergy,
    /// `int |U*|^2`
    L2Squared,
    /// `int f U*`
    SourcePairing(ScalarFunction),
}

/// Integrates `kind` over the domain for the truncated field.
pub fn integrate_cut(field: &CutoffField, kind: &CutIntegrand) -> Result<Integral> {
    let integrator = field.integrator()?;
    let mesh = field.space().mesh();
    let pieces = |t| field.pieces(t);
    Ok(match kind {
        CutIntegrand::DirichletEnergy => integrator.integrate(mesh, pieces, |t, l, _, branch| {
            let g = field.gradient_on(t, l, branch);
            g[0] * g[0] + g[1] * g[1]
        }),
        CutIntegrand::L2Squared => integrator.integrate(mesh, pieces, |t, l, _, branch| {
            let v = field.value_on(t, l, branch);
            v * v
        }),
        CutIntegrand::SourcePairing(f) => {
            integrator.integrate(mesh, pieces, |t, l, x, branch| f.eval(x) * field.value_on(t, l, branch))
        }
    })
}

/// Checks `|u - U*| <= |u - U| + 1e-12` at the given points, where `u` is a
/// reference field that must itself satisfy `u <= level + 1e-12` there.
pub fn pointwise_error_bound_check_at<R: ScalarField>(
    reference: &Located<R>,
    u: &Located<FEFunction>,
    level: f64,
    points: &[Point],
) -> Result<bool> {
    let mut samples = Vec::with_capacity(points.len());
    for &x in points {
        let r = reference
            .value_at(x)
            .ok_or_else(|| Error::Precondition(format!("reference undefined at {x:?}")))?;
        let v = u
            .value_at(x)
            .ok_or_else(|| Error::Precondition(format!("field undefined at {x:?}")))?;
        if r > level + 1e-12 {
            return Err(Error::Precondition(format!(
                "reference value {r} at ({}, {}) exceeds the level {level}",
                x[0], x[1]
            )));
        }
        samples.push((r, v));
    }
    Ok(samples
        .iter()
        .all(|&(r, v)| (r - v.min(level)).abs() <= (r - v).abs() + 1e-12))
}

/// [`pointwise_error_bound_check_at`] on the quadrature points of every triangle of `U`'s mesh.
pub fn pointwise_error_bound_check<R: ScalarField>(
    reference: &Located<R>,
    u: &Located<FEFunction>,
    level: f64,
) -> Result<bool> {
    let space = u.field.space();
    let rule = quadrature(crate::assembly::assembly_degree(space.degree()))?;
    let mesh = space.mesh();
    let points: Vec<Point> = (0..mesh.triangle_count())
        .flat_map(|t| rule.points.iter().map(move |&l| mesh.point_at(t, l)))
        .collect();
    pointwise_error_bound_check_at(reference, u, level, &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_grid;
    use crate::mesh::{generate, MeshFamily, MeshKind};

    fn space(kind: MeshKind, n: usize, degree: usize) -> Arc<FESpace> {
        let mesh = generate(&MeshFamily::new(kind, n, 0.2, 1)).unwrap();
        FESpace::new(Arc::new(mesh), degree).unwrap()
    }

    #[test]
    fn sup_boundary_basic_cases() {
        let s = space(MeshKind::Perturbed, 4, 1);
        let x = FEFunction::interpolate_scalar(s.clone(), |p| p[0]).unwrap();
        assert_eq!(sup_boundary(&x, CutoffMode::PlainSup).unwrap(), 1.0);
        let neg = FEFunction::interpolate_scalar(s.clone(), |_| -3.0).unwrap();
        assert_eq!(sup_boundary(&neg, CutoffMode::PositivePartSup).unwrap(), 0.0);
        assert_eq!(sup_boundary(&neg, CutoffMode::PlainSup).unwrap(), -3.0);
        let v = FEFunction::interpolate_vector(s, |p| p).unwrap();
        assert!(matches!(sup_boundary(&v, CutoffMode::PlainSup), Err(Error::Unsupported(_))));
    }

    #[test]
    fn sup_boundary_finds_interior_edge_maximum() {
        let s = space(MeshKind::Structured, 1, 2);
        let u = FEFunction::interpolate_scalar(s, |p| 4.0 * p[0] * (1.0 - p[0]) * (1.0 - p[1])).unwrap();
        assert_eq!(sup_boundary(&u, CutoffMode::PlainSup).unwrap(), 1.0);
        // a quadratic whose edge maximum is strictly between dofs
        assert!((edge_quadratic_max(0.0, 0.5, 0.5) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn quadratic_range_matches_dense_sampling() {
        let vals = [[0.3, -1.0, 0.2, 1.5, -0.4, 0.9], [1.0, 1.0, 1.0, 0.0, 0.0, 0.0], [0.0; 6]];
        let s = space(MeshKind::Structured, 1, 2);
        for u in vals {
            let (lo, hi) = quadratic_range(&u);
            let mut slo = f64::INFINITY;
            let mut shi = f64::NEG_INFINITY;
            let n = 400;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let l = [1.0 - (i + j) as f64 / n as f64, i as f64 / n as f64, j as f64 / n as f64];
                    let phi = s.basis_values(l);
                    let v: f64 = phi.iter().zip(u).map(|(p, c)| p * c).sum();
                    slo = slo.min(v);
                    shi = shi.max(v);
                }
            }
            assert!(lo <= slo + 1e-14 && hi >= shi - 1e-14);
            assert!(slo - lo < 1e-4 && hi - shi < 1e-4, "{lo} {hi} vs {slo} {shi}");
        }
    }

    #[test]
    fn cutoff_is_identity_when_sup_is_on_boundary() {
        let s = space(MeshKind::Perturbed, 4, 2);
        let five = FEFunction::interpolate_scalar(s.clone(), |_| 5.0).unwrap();
        let c = make_cutoff(&five, CutoffMode::PositivePartSup).unwrap();
        assert_eq!(c.level(), 5.0);
        assert_eq!(c.value_in(3, [0.2, 0.2, 0.6]), 5.0);
        let e = integrate_cut(&c, &CutIntegrand::DirichletEnergy).unwrap();
        assert!(e.value.abs() < 1e-20);

        let x = FEFunction::interpolate_scalar(s, |p| p[0]).unwrap();
        let c = make_cutoff(&x, CutoffMode::PlainSup).unwrap();
        for t in 0..x.mesh().triangle_count() {
            assert!(!c.is_active(t));
        }
    }

    #[test]
    fn exact_split_integrals() {
        let s = space(MeshKind::Structured, 3, 1);
        let x = FEFunction::interpolate_scalar(s, |p| p[0]).unwrap();
        let c = CutoffField::at_level(&x, 0.5).unwrap();
        let e = integrate_cut(&c, &CutIntegrand::DirichletEnergy).unwrap();
        assert!((e.value - 0.5).abs() < 1e-14);
        assert_eq!(e.error_estimate, 0.0);
        let l2 = integrate_cut(&c, &CutIntegrand::L2Squared).unwrap();
        assert!((l2.value - 1.0 / 6.0).abs() < 1e-14);
        let f = integrate_cut(&c, &CutIntegrand::SourcePairing((-2.0).into())).unwrap();
        // -2 (int_0^.5 x dx + .5 * .5) = -2 (1/8 + 1/4)
        assert!((f.value + 0.75).abs() < 1e-14);
    }

    #[test]
    fn split_pieces_tile_the_triangle() {
        for (u, m) in [([0.0, 1.0, 2.0], 0.5), ([0.0, 1.0, 2.0], 1.0), ([2.0, -1.0, -1.0], 0.0), ([1.0, 1.0, 0.0], 0.3)] {
            let total: f64 = split_p1(u, m).iter().map(crate::integrate::bary_area_fraction).sum();
            assert!((total - 1.0).abs() < 1e-14, "{u:?} {m}");
        }
    }

    #[test]
    fn p2_cut_integral_converges_with_depth() {
        let s = space(MeshKind::Perturbed, 3, 2);
        let u = FEFunction::interpolate_scalar(s, |p| (3.0 * p[0]).sin() * (2.0 * p[1]).cos()).unwrap();
        let c5 = CutoffField::at_level(&u, 0.4).unwrap();
        let c6 = c5.clone().with_depth(6);
        for kind in [CutIntegrand::DirichletEnergy, CutIntegrand::L2Squared] {
            let a = integrate_cut(&c5, &kind).unwrap();
            let b = integrate_cut(&c6, &kind).unwrap();
            assert!(a.error_estimate > 0.0);
            assert!((a.value - b.value).abs() <= a.error_estimate, "{kind:?}: {a:?} {b:?}");
        }
        assert!(integrate_cut(&c5.clone().with_depth(1), &CutIntegrand::L2Squared).is_err());
        assert!(integrate_cut(&c5.with_depth(11), &CutIntegrand::L2Squared).is_err());
    }

    #[test]
    fn spike_is_truncated_on_grid() {
        let s = space(MeshKind::Structured, 4, 1);
        let bump = |p: Point| (1.0 - 8.0 * ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2))).max(0.0);
        let u = FEFunction::interpolate_scalar(s, |p| p[0] * 0.3 + bump(p)).unwrap();
        let c = make_cutoff(&u, CutoffMode::PlainSup).unwrap();
        assert!((c.level() - 0.3).abs() < 1e-15);
        let lu = Located::new(u.clone());
        let lc = Located::new(c.clone());
        let mut strictly_below = 0;
        for x in sample_grid(60) {
            let (a, b) = (lu.value_at(x).unwrap(), lc.value_at(x).unwrap());
            assert!(b <= a && b <= c.level());
            if a > c.level() {
                assert_eq!(b, c.level());
                strictly_below += 1;
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(strictly_below > 0);
    }

    #[test]
    fn pointwise_bound_holds_and_checks_precondition() {
        let s = space(MeshKind::Perturbed, 5, 1);
        let reference = FEFunction::interpolate_scalar(s.clone(), |p| 0.5 * p[0] * p[1]).unwrap();
        let overshoot = FEFunction::interpolate_scalar(s.clone(), |p| {
            0.5 * p[0] * p[1] + 8.0 * p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1])
        })
        .unwrap();
        let level = sup_boundary(&overshoot, CutoffMode::PlainSup).unwrap();
        let r = Located::new(reference.clone());
        assert!(pointwise_error_bound_check(&r, &Located::new(overshoot.clone()), level).unwrap());
        assert!(pointwise_error_bound_check(&r, &Located::new(reference.clone()), level).unwrap());
        let bad = Located::new(overshoot.clone());
        let err = pointwise_error_bound_check(&bad, &Located::new(reference), level).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
