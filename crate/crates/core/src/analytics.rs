//! Energies, error norms, the energy-gap identity and maximum-principle
//! violation measurements.

use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use crate::assembly::{assemble, assembly_degree, solve_from, ProblemSpec, ScalarFunction};
use crate::cutoff::{make_cutoff, sup_boundary, CutoffMode};
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FESpace};
use crate::field::{integrate_against, integrate_pair, sample_grid, Located, Repieced, ScalarField};
use crate::integrate::{Integral, Integrator};
use crate::mesh::{Mesh, Point};

/// Side length of the sample grid used by [`dmp_violation`].
pub const DMP_GRID: usize = 100;
pub const MAX_REFERENCE_LEVEL: u32 = 7;
pub const MAX_REFERENCE_DOFS: usize = 1_500_000;

/// Records the first sign violation seen inside a parallel integrand.
struct SignGuard(Mutex<Option<Error>>);

impl SignGuard {
    fn new() -> Self {
        SignGuard(Mutex::new(None))
    }

    fn check(&self, c: f64, f: f64, x: Point) -> bool {
        let what = if !(c >= 0.0) {
            format!("reaction c = {c} < 0")
        } else if !(f <= 0.0) {
            format!("source f = {f} > 0")
        } else {
            return true;
        };
        let mut slot = self.0.lock().unwrap();
        if slot.is_none() {
            *slot = Some(Error::SignCondition { what, x: x[0], y: x[1] });
        }
        false
    }

    fn finish(self, value: Integral) -> Result<Integral> {
        match self.0.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

/// `J(v) = 1/2 int |grad v|^2 + c v^2 - int f v`.
pub fn energy<F: ScalarField>(v: &F, spec: &ProblemSpec) -> Result<Integral> {
    let integrator = Integrator::new(assembly_degree(v.space().degree()), v.subdivision_depth())?;
    let guard = SignGuard::new();
    let value = integrator.integrate(v.space().mesh(), |t| v.pieces(t), |t, l, x, branch| {
        let (c, f) = (spec.c.eval(x), spec.f.eval(x));
        if !guard.check(c, f, x) {
            return 0.0;
        }
        let g = v.gradient_on(t, l, branch);
        let u = v.value_on(t, l, branch);
        0.5 * (g[0] * g[0] + g[1] * g[1] + c * u * u) - f * u
    });
    guard.finish(value)
}

fn degree_of<A: ScalarField, B: ScalarField>(a: &A, b: &B) -> usize {
    assembly_degree(a.space().degree().max(b.space().degree()))
}

/// `|||a - b|||^2 = int |grad(a - b)|^2 + c (a - b)^2` for fields on one mesh.
pub fn energy_norm_sq<A: ScalarField, B: ScalarField>(a: &A, b: &B, c: &ScalarFunction) -> Result<Integral> {
    integrate_pair(a, b, degree_of(a, b), |s| {
        let d = [s.grad_a[0] - s.grad_b[0], s.grad_a[1] - s.grad_b[1]];
        d[0] * d[0] + d[1] * d[1] + c.eval(s.x) * (s.a - s.b).powi(2)
    })
}

/// `|||v - u|||^2` for a reference `u` on another mesh, integrated over `v`'s mesh.
pub fn energy_error_sq<A: ScalarField, R: ScalarField>(
    v: &A,
    reference: &Located<R>,
    c: &ScalarFunction,
) -> Result<Integral> {
    integrate_against(v, reference, degree_of(v, &reference.field), v.subdivision_depth(), |s| {
        let d = [s.grad_a[0] - s.grad_b[0], s.grad_a[1] - s.grad_b[1]];
        d[0] * d[0] + d[1] * d[1] + c.eval(s.x) * (s.a - s.b).powi(2)
    })
}

/// `||v - u||^2` in L2 for a reference `u` on another mesh.
pub fn l2_error_sq<A: ScalarField, R: ScalarField>(v: &A, reference: &Located<R>) -> Result<Integral> {
    integrate_against(v, reference, degree_of(v, &reference.field), v.subdivision_depth(), |s| {
        (s.a - s.b).powi(2)
    })
}

/// `|(J(v) - J(u_h)) - |||v - u_h|||^2 / 2|` for the discrete solution `u_h`
/// and a field `v` with the same boundary values.
pub fn energy_gap_identity_check(u_h: &FEFunction, v: &FEFunction, spec: &ProblemSpec) -> Result<f64> {
    if u_h.space().dof_count() != v.space().dof_count() || u_h.space().degree() != v.space().degree() {
        return Err(Error::Precondition("fields live in different spaces".into()));
    }
    for &d in u_h.space().boundary_dofs() {
        let (a, b) = (u_h.coefficients()[d], v.coefficients()[d]);
        if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
            return Err(Error::Precondition(format!(
                "boundary dof {d} differs: {a} vs {b}"
            )));
        }
    }
    let jv = energy(v, spec)?.value;
    let ju = energy(u_h, spec)?.value;
    let gap = energy_norm_sq(v, u_h, &spec.c)?.value;
    Ok(((jv - ju) - 0.5 * gap).abs())
}

/// Largest excess of `field` over `level` at the element nodes of every
/// triangle and on a `DMP_GRID x DMP_GRID` grid; zero when none.
pub fn dmp_excess<F: ScalarField>(field: &Located<F>, level: f64) -> f64 {
    let space = field.field.space();
    let nodes: &[[f64; 3]] = match space.degree() {
        1 => &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        _ => &[
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ],
    };
    let mut sup = f64::NEG_INFINITY;
    for t in 0..space.mesh().triangle_count() {
        for &l in nodes {
            sup = sup.max(field.field.value_in(t, l));
        }
    }
    for x in sample_grid(DMP_GRID) {
        if let Some(v) = field.value_at(x) {
            sup = sup.max(v);
        }
    }
    (sup - level).max(0.0)
}

/// `max(0, sup_samples U - sup_boundary(U, mode))`.
pub fn dmp_violation(u: &FEFunction, mode: CutoffMode) -> Result<f64> {
    let level = sup_boundary(u, mode)?;
    Ok(dmp_excess(&Located::new(u.clone()), level))
}

/// Fine-mesh stand-in for the exact solution.
#[derive(Debug)]
pub struct ReferenceSolution {
    pub solution: Located<FEFunction>,
    pub level: u32,
    /// `|||u_L - u_(L-1)|||` in the problem's energy norm; `None` at level 0.
    pub error_estimate: Option<f64>,
}

/// P2 solve on [`Mesh::refined_tensor`]`(base, level)`, together with the
/// energy-norm difference to the level below.
pub fn reference_solution(spec: &ProblemSpec, base: &Mesh, level: u32, tol: f64) -> Result<ReferenceSolution> {
    if level > MAX_REFERENCE_LEVEL {
        return Err(Error::TooLarge(format!(
            "reference level {level} exceeds {MAX_REFERENCE_LEVEL}"
        )));
    }
    let space_at = |l: u32| -> Result<Arc<FESpace>> {
        let (xs, ys) = base.refined_breakpoints(l);
        // P2 dofs of a tensor grid: (2 nx + 1)(2 ny + 1)
        let dofs = (2 * xs.len() - 1) * (2 * ys.len() - 1);
        if dofs > MAX_REFERENCE_DOFS {
            return Err(Error::TooLarge(format!(
                "reference level {l} needs {dofs} dofs, cap is {MAX_REFERENCE_DOFS}"
            )));
        }
        FESpace::new(Arc::new(Mesh::tensor(&xs, &ys)?), 2)
    };
    let fine_space = space_at(level)?;
    let fine_system = assemble(&fine_space, spec)?;
    if level == 0 {
        let u = solve_from(&fine_system, tol, None)?;
        return Ok(ReferenceSolution { solution: Located::new(u), level, error_estimate: None });
    }
    let coarse_space = space_at(level - 1)?;
    let coarse = Located::new(solve_from(&assemble(&coarse_space, spec)?, tol, None)?);
    // nested meshes: the coarse P2 field is exactly a fine P2 field
    let prolonged = FEFunction::interpolate_scalar(fine_space.clone(), |x| {
        coarse.value_at(x).expect("nested reference meshes cover the same square")
    })?;
    let u = solve_from(&fine_system, tol, Some(&prolonged))?;
    let diff: Vec<f64> = u.coefficients().iter().zip(prolonged.coefficients()).map(|(a, b)| a - b).collect();
    let estimate = fine_system.full_matrix.form(&diff, &diff).max(0.0).sqrt();
    Ok(ReferenceSolution { solution: Located::new(u), level, error_estimate: Some(estimate) })
}

/// Width of the interval of square roots compatible with `value +- estimate`.
fn sqrt_estimate(i: &Integral) -> f64 {
    (i.value + i.error_estimate).max(0.0).sqrt() - (i.value - i.error_estimate).max(0.0).sqrt()
}

/// Energies and errors of a discrete field and its cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub level: f64,
    pub j_u: f64,
    pub j_ustar: f64,
    pub energy_norm_err_u: f64,
    pub energy_norm_err_ustar: f64,
    pub l2_err_u: f64,
    pub l2_err_ustar: f64,
    pub dmp_violation: f64,
    pub dmp_violation_ustar: f64,
    pub quadrature_error_estimate: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "level,J_U,J_Ustar,energy_norm_err_U,energy_norm_err_Ustar,\
l2_err_U,l2_err_Ustar,dmp_violation,dmp_violation_Ustar,quadrature_error_estimate";

    fn values(&self) -> [(&'static str, f64); 10] {
        [
            ("level", self.level),
            ("J_U", self.j_u),
            ("J_Ustar", self.j_ustar),
            ("energy_norm_err_U", self.energy_norm_err_u),
            ("energy_norm_err_Ustar", self.energy_norm_err_ustar),
            ("l2_err_U", self.l2_err_u),
            ("l2_err_Ustar", self.l2_err_ustar),
            ("dmp_violation", self.dmp_violation),
            ("dmp_violation_Ustar", self.dmp_violation_ustar),
            ("quadrature_error_estimate", self.quadrature_error_estimate),
        ]
    }

    /// `key=value` lines in CSV column order.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.values() {
            let _ = writeln!(s, "{k}={v:e}");
        }
        s
    }

    pub fn csv_row(&self) -> String {
        self.values().iter().map(|(_, v)| format!("{v:e}")).collect::<Vec<_>>().join(",")
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|(_, v)| v.is_finite())
    }
}

/// Truncates `u` and measures both fields against `reference`.
pub fn energy_report(
    u: &FEFunction,
    mode: CutoffMode,
    spec: &ProblemSpec,
    reference: &Located<FEFunction>,
) -> Result<EnergyReport> {
    let ustar = make_cutoff(u, mode)?;
    let ju = energy(&Repieced { field: u, pattern: &ustar }, spec)?;
    let js = energy(&ustar, spec)?;
    let eu = energy_error_sq(u, reference, &spec.c)?;
    let es = energy_error_sq(&ustar, reference, &spec.c)?;
    let lu = l2_error_sq(u, reference)?;
    let ls = l2_error_sq(&ustar, reference)?;
    let quad = [ju.error_estimate, js.error_estimate]
        .into_iter()
        .chain([&eu, &es, &lu, &ls].map(sqrt_estimate))
        .fold(0.0, f64::max);
    Ok(EnergyReport {
        level: ustar.level(),
        j_u: ju.value,
        j_ustar: js.value,
        energy_norm_err_u: eu.value.max(0.0).sqrt(),
        energy_norm_err_ustar: es.value.max(0.0).sqrt(),
        l2_err_u: lu.value.max(0.0).sqrt(),
        l2_err_ustar: ls.value.max(0.0).sqrt(),
        dmp_violation: dmp_excess(&Located::new(u.clone()), ustar.level()),
        dmp_violation_ustar: dmp_excess(&Located::new(ustar.clone()), ustar.level()),
        quadrature_error_estimate: quad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::solve;
    use crate::mesh::{generate, MeshFamily, MeshKind};

    fn space(kind: MeshKind, n: usize, degree: usize) -> Arc<FESpace> {
        let mesh = generate(&MeshFamily::new(kind, n, 0.2, 11)).unwrap();
        FESpace::new(Arc::new(mesh), degree).unwrap()
    }

    #[test]
    fn energy_examples() {
        let s = space(MeshKind::Perturbed, 3, 1);
        let x = FEFunction::interpolate_scalar(s.clone(), |p| p[0]).unwrap();
        let one = FEFunction::interpolate_scalar(s, |_| 1.0).unwrap();
        let e = |v: &FEFunction, spec: ProblemSpec| energy(v, &spec).unwrap().value;
        assert!((e(&x, ProblemSpec::laplace(0.0)) - 0.5).abs() < 1e-13);
        assert!((e(&one, ProblemSpec::laplace(0.0).with_reaction(1.0)) - 0.5).abs() < 1e-13);
        assert!((e(&one, ProblemSpec::laplace(0.0).with_source(-1.0)) - 1.0).abs() < 1e-13);
        assert!(matches!(
            energy(&one, &ProblemSpec::laplace(0.0).with_source(1.0)),
            Err(Error::SignCondition { .. })
        ));
    }

    #[test]
    fn energy_norm_examples() {
        let s = space(MeshKind::Perturbed, 3, 2);
        let x = FEFunction::interpolate_scalar(s.clone(), |p| p[0]).unwrap();
        let zero = FEFunction::zeros(s, 1);
        assert_eq!(energy_norm_sq(&x, &x, &0.0.into()).unwrap().value, 0.0);
        assert!((energy_norm_sq(&x, &zero, &0.0.into()).unwrap().value - 1.0).abs() < 1e-13);
        assert!((energy_norm_sq(&x, &zero, &1.0.into()).unwrap().value - 4.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn gap_identity_and_boundary_contract() {
        let s = space(MeshKind::Perturbed, 4, 2);
        let spec = ProblemSpec::laplace(ScalarFunction::new(|p| p[0] * p[1])).with_reaction(3.0).with_source(-2.0);
        let u = solve(&assemble(&s, &spec).unwrap(), 1e-12).unwrap();
        assert!(energy_gap_identity_check(&u, &u, &spec).unwrap() < 1e-14);
        let mut c = u.coefficients().to_vec();
        let interior = (0..c.len()).find(|d| s.boundary_dofs().binary_search(d).is_err()).unwrap();
        c[interior] += 0.3;
        let v = FEFunction::new(s.clone(), 1, c.clone()).unwrap();
        assert!(energy_gap_identity_check(&u, &v, &spec).unwrap() < 1e-10);
        c[s.boundary_dofs()[0]] += 0.1;
        let w = FEFunction::new(s, 1, c).unwrap();
        assert!(matches!(energy_gap_identity_check(&u, &w, &spec), Err(Error::Precondition(_))));
    }

    #[test]
    fn dmp_violation_of_monotone_and_cut_fields() {
        let s = space(MeshKind::Perturbed, 4, 1);
        let x = FEFunction::interpolate_scalar(s.clone(), |p| p[0]).unwrap();
        assert_eq!(dmp_violation(&x, CutoffMode::PlainSup).unwrap(), 0.0);
        let bump = FEFunction::interpolate_scalar(s, |p| p[0] * p[1] * (1.0 - p[0]) * (1.0 - p[1])).unwrap();
        assert!(dmp_violation(&bump, CutoffMode::PlainSup).unwrap() > 0.0);
        let cut = make_cutoff(&bump, CutoffMode::PlainSup).unwrap();
        assert_eq!(dmp_excess(&Located::new(cut.clone()), cut.level()), 0.0);
    }

    #[test]
    fn reference_for_linear_data_is_exact() {
        let base = generate(&MeshFamily::new(MeshKind::ObtuseBand, 3, 0.2, 1)).unwrap();
        let spec = ProblemSpec::laplace(ScalarFunction::new(|p| 2.0 * p[0] - p[1]));
        for level in [0, 2] {
            let r = reference_solution(&spec, &base, level, 1e-12).unwrap();
            for (d, x) in r.solution.field.space().dof_coords().iter().enumerate() {
                assert!((r.solution.field.coefficients()[d] - (2.0 * x[0] - x[1])).abs() < 1e-10);
            }
            assert!(r.error_estimate.unwrap_or(0.0) < 1e-9);
        }
        assert!(matches!(reference_solution(&spec, &base, 8, 1e-10), Err(Error::TooLarge(_))));
    }

    #[test]
    fn reference_level_zero_is_the_direct_solve() {
        let base = generate(&MeshFamily::structured(4)).unwrap();
        let spec = ProblemSpec::laplace(ScalarFunction::new(|p| (3.0 * p[0]).sin())).with_source(-1.0);
        let r = reference_solution(&spec, &base, 0, 1e-12).unwrap();
        let s = FESpace::new(Arc::new(base), 2).unwrap();
        let direct = solve(&assemble(&s, &spec).unwrap(), 1e-12).unwrap();
        let gap = r.solution.field.coefficients().iter().zip(direct.coefficients()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-10);
    }

    #[test]
    fn report_serialization() {
        let s = space(MeshKind::Structured, 4, 1);
        let spec = ProblemSpec::laplace(ScalarFunction::new(|p| p[0]));
        let u = solve(&assemble(&s, &spec).unwrap(), 1e-12).unwrap();
        let reference = Located::new(u.clone());
        let r = energy_report(&u, CutoffMode::PlainSup, &spec, &reference).unwrap();
        assert_eq!(r.dmp_violation, 0.0);
        assert_eq!(r.j_u, r.j_ustar);
        assert!(r.all_finite());
        let kv = r.to_key_value();
        assert!(kv.starts_with("level=1e0\nJ_U="));
        assert_eq!(r.csv_row().split(',').count(), EnergyReport::CSV_HEADER.split(',').count());
    }
}
