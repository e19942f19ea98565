//! p-Laplace energy minimization, cutoff comparison and the Barrett-Liu
//! quasi-norm.

use std::sync::Arc;

use crate::assembly::{assemble_weighted, assembly_degree, solve, ScalarFunction};
use crate::cutoff::{make_cutoff, CutoffMode};
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FESpace, MAX_LOCAL_DOFS};
use crate::field::{integrate_against, integrate_pair, Located, PairSample, ScalarField};
use crate::integrate::{Integral, Integrator};
use crate::linalg::{pcg, CsrMatrix};
use crate::quadrature::quadrature;

pub const DEFAULT_EPSILON: f64 = 1e-7;
pub const MAX_ITERATIONS: usize = 200;
pub const P_RANGE: (f64, f64) = (1.2, 8.0);

#[derive(Clone, Debug)]
pub struct PLaplaceSpec {
    pub p: f64,
    /// Source density, `f <= 0`.
    pub f: ScalarFunction,
    pub g: ScalarFunction,
    /// Gradient regularization used by the solver only.
    pub epsilon: f64,
}

impl PLaplaceSpec {
    pub fn new(p: f64, f: impl Into<ScalarFunction>, g: impl Into<ScalarFunction>) -> Result<Self> {
        if !(P_RANGE.0..=P_RANGE.1).contains(&p) {
            return Err(Error::Config(format!(
                "exponent p = {p} outside [{}, {}]",
                P_RANGE.0, P_RANGE.1
            )));
        }
        Ok(PLaplaceSpec { p, f: f.into(), g: g.into(), epsilon: DEFAULT_EPSILON })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("regularization epsilon = {epsilon} must be >= 0")));
        }
        self.epsilon = epsilon;
        Ok(self)
    }
}

fn norm(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

/// `int |grad v|^p / p - int f v`, unregularized.
pub fn p_energy<F: ScalarField>(v: &F, spec: &PLaplaceSpec) -> Result<Integral> {
    let degree = assembly_degree(v.space().degree());
    let integrator = Integrator::new(degree, v.subdivision_depth())?;
    let p = spec.p;
    Ok(integrator.integrate(v.space().mesh(), |t| v.pieces(t), |t, l, x, branch| {
        norm(v.gradient_on(t, l, branch)).powf(p) / p - spec.f.eval(x) * v.value_on(t, l, branch)
    }))
}

/// Local values needed by the regularized energy at one quadrature point.
struct Sample {
    weight: f64,
    phi: [f64; MAX_LOCAL_DOFS],
    dphi: [[f64; 2]; MAX_LOCAL_DOFS],
    f: f64,
}

/// Regularized discrete energy `int (eps^2 + |grad u|^2)^(p/2) / p - f u`,
/// evaluated with the assembly quadrature.
struct Regularized<'a> {
    space: &'a FESpace,
    p: f64,
    eps2: f64,
    samples: Vec<Vec<Sample>>,
}

impl<'a> Regularized<'a> {
    fn new(space: &'a FESpace, spec: &PLaplaceSpec) -> Result<Self> {
        let mesh = space.mesh();
        let rule = quadrature(assembly_degree(space.degree()))?;
        let nd = space.local_dofs();
        let samples = (0..mesh.triangle_count())
            .map(|t| {
                let area2 = 2.0 * space.area(t);
                rule.iter()
                    .map(|(l, w)| {
                        let mut phi = [0.0; MAX_LOCAL_DOFS];
                        phi[..nd].copy_from_slice(&space.basis_values(l)[..nd]);
                        let mut dphi = [[0.0; 2]; MAX_LOCAL_DOFS];
                        dphi[..nd].copy_from_slice(&space.basis_gradients(t, l)[..nd]);
                        Sample { weight: area2 * w, phi, dphi, f: spec.f.eval(mesh.point_at(t, l)) }
                    })
                    .collect()
            })
            .collect();
        Ok(Regularized { space, p: spec.p, eps2: spec.epsilon * spec.epsilon, samples })
    }

    fn local(&self, t: usize, s: &Sample, c: &[f64]) -> (f64, [f64; 2]) {
        let mut val = 0.0;
        let mut g = [0.0; 2];
        for (i, &d) in self.space.dofs(t).iter().enumerate() {
            val += c[d] * s.phi[i];
            g[0] += c[d] * s.dphi[i][0];
            g[1] += c[d] * s.dphi[i][1];
        }
        (val, g)
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for (t, samples) in self.samples.iter().enumerate() {
            for s in samples {
                let (val, g) = self.local(t, s, u);
                let r = self.eps2 + g[0] * g[0] + g[1] * g[1];
                e += s.weight * (r.powf(0.5 * self.p) / self.p - s.f * val);
            }
        }
        e
    }

    /// `J(u + d) - J(u)` without cancellation against the full energy, and
    /// the gradient of `J` at `u + d`.
    fn step(&self, u: &[f64], d: &[f64]) -> (f64, Vec<f64>) {
        let half_p = 0.5 * self.p;
        let mut delta = 0.0;
        let mut grad = vec![0.0; u.len()];
        for (t, samples) in self.samples.iter().enumerate() {
            let dofs = self.space.dofs(t);
            for s in samples {
                let (val_d, gd) = self.local(t, s, d);
                let (_, gu) = self.local(t, s, u);
                let r = self.eps2 + gu[0] * gu[0] + gu[1] * gu[1];
                let dr = 2.0 * (gu[0] * gd[0] + gu[1] * gd[1]) + gd[0] * gd[0] + gd[1] * gd[1];
                // r^(p/2) ((1 + dr/r)^(p/2) - 1), accurate for small dr
                let dpow = if r > 0.0 {
                    r.powf(half_p) * (half_p * (dr / r).ln_1p()).exp_m1()
                } else {
                    dr.powf(half_p)
                };
                delta += s.weight * (dpow / self.p - s.f * val_d);
                let g = [gu[0] + gd[0], gu[1] + gd[1]];
                let k = (r + dr).powf(half_p - 1.0);
                for (i, &dof) in dofs.iter().enumerate() {
                    grad[dof] += s.weight * (k * (g[0] * s.dphi[i][0] + g[1] * s.dphi[i][1]) - s.f * s.phi[i]);
                }
            }
        }
        (delta, grad)
    }
}

#[derive(Clone, Debug)]
pub struct PLaplaceSolution {
    pub solution: FEFunction,
    /// Regularized energies of the accepted iterates, starting with the
    /// linear initial guess.
    pub energies: Vec<f64>,
    pub iterations: usize,
    /// Largest first variation over free basis functions at the returned iterate.
    pub gradient_norm: f64,
}

/// Minimizes the regularized p-Laplace energy over `g + V_0` by damped
/// Kacanov iteration.
///
/// Each step solves a weighted Laplace problem with weight
/// `(eps^2 + |grad u_k|^2)^((p-2)/2)` for the correction; the step length is
/// refined by a quadratic fit and halved until the regularized energy does
/// not increase. Stops when the relative
/// energy decrease is below `tol` and every first variation is below
/// `tol (1 + |J|)`, or when no step length reduces the energy any more.
pub fn solve_plaplace(space: &Arc<FESpace>, spec: &PLaplaceSpec, tol: f64) -> Result<PLaplaceSolution> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::Config(format!("solver tolerance {tol} outside (0, 1e-4]")));
    }
    let zero = ScalarFunction::Constant(0.0);
    let linear = assemble_weighted(space, |_, _, _| 1.0, &zero, &spec.f, &spec.g)?;
    let free = linear.free_dofs.clone();
    let mut u = solve(&linear, 1e-12)?;
    let functional = Regularized::new(space, spec)?;
    let mut j = functional.energy(u.coefficients());
    let (_, mut grad) = functional.step(u.coefficients(), &vec![0.0; space.dof_count()]);
    let mut energies = vec![j];
    let free_max = |g: &[f64]| free.iter().map(|&d| g[d].abs()).fold(0.0, f64::max);
    let mut decrease = f64::INFINITY;
    for it in 0..=MAX_ITERATIONS {
        let gnorm = free_max(&grad);
        let done = |solution| Ok(PLaplaceSolution { solution, energies: energies.clone(), iterations: it, gradient_norm: gnorm });
        if free.is_empty() || (gnorm <= tol * (1.0 + j.abs()) && decrease < tol) {
            return done(u);
        }
        if it == MAX_ITERATIONS {
            break;
        }
        let matrix = weighted_matrix(&u, spec)?;
        let rhs: Vec<f64> = free.iter().map(|&d| -grad[d]).collect();
        let dir = pcg(&matrix, &rhs, None, 1e-10, 20 * space.dof_count())?.solution;
        let trial = |alpha: f64| {
            let mut step = vec![0.0; space.dof_count()];
            for (&d, &s) in free.iter().zip(&dir) {
                step[d] = alpha * s;
            }
            let (delta, g) = functional.step(u.coefficients(), &step);
            (alpha, delta, g, step)
        };
        // the unit step is the Kacanov update; a quadratic fit along the
        // direction corrects its length, halving guards against increase
        let slope: f64 = free.iter().zip(&dir).map(|(&d, &s)| grad[d] * s).sum();
        let unit = trial(1.0);
        let curvature = unit.1 - slope;
        let mut best = unit;
        if curvature > 0.0 {
            let fitted = (-slope / (2.0 * curvature)).clamp(0.05, 20.0);
            if (fitted - 1.0).abs() > 1e-3 {
                let cand = trial(fitted);
                if cand.1 < best.1 {
                    best = cand;
                }
            }
        }
        while best.1 > 0.0 && best.0 >= 1e-12 {
            best = trial(0.5 * best.0);
        }
        let (_, delta, g, step) = best;
        if delta > 0.0 {
            // no representable descent left: minimizer up to rounding
            return done(u);
        }
        let coeffs: Vec<f64> = u.coefficients().iter().zip(&step).map(|(a, b)| a + b).collect();
        u = FEFunction::new(space.clone(), 1, coeffs)?;
        j += delta;
        decrease = -delta / (1.0 + j.abs());
        grad = g;
        energies.push(j);
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        last_gap: decrease,
    })
}

fn weighted_matrix(u: &FEFunction, spec: &PLaplaceSpec) -> Result<CsrMatrix> {
    let zero = ScalarFunction::Constant(0.0);
    let (p, eps2) = (spec.p, spec.epsilon * spec.epsilon);
    // the weight only shapes the search direction; a floor keeps the
    // correction problem well conditioned where p > 2 and grad u vanishes
    let floor = 1e-10;
    let sys = assemble_weighted(
        u.space(),
        |t, l, _| {
            let g = u.component_gradient(t, l, 0);
            (eps2 + g[0] * g[0] + g[1] * g[1]).powf(0.5 * p - 1.0).max(floor)
        },
        &zero,
        &zero,
        &zero,
    )?;
    Ok(sys.matrix)
}

/// Which quantities enter the quasi-norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QuasiNormForm {
    /// `int (|grad u| + |grad v|)^(p-2) |grad u - grad v|^2`
    #[default]
    Gradient,
    /// `int (|u| + |v|)^(p-2) |u - v|^2`
    Value,
}

fn quasi_integrand(s: &PairSample, p: f64, form: QuasiNormForm) -> f64 {
    let (scale, diff2) = match form {
        QuasiNormForm::Gradient => {
            let d = [s.grad_a[0] - s.grad_b[0], s.grad_a[1] - s.grad_b[1]];
            (norm(s.grad_a) + norm(s.grad_b), d[0] * d[0] + d[1] * d[1])
        }
        QuasiNormForm::Value => (s.a.abs() + s.b.abs(), (s.a - s.b).powi(2)),
    };
    if diff2 == 0.0 { 0.0 } else { scale.powf(p - 2.0) * diff2 }
}

/// Quasi-norm distance of two fields on the same mesh.
pub fn quasi_norm_sq<A: ScalarField, B: ScalarField>(u: &A, v: &B, p: f64, form: QuasiNormForm) -> Result<Integral> {
    let degree = assembly_degree(u.space().degree().max(v.space().degree()));
    integrate_pair(u, v, degree, |s| quasi_integrand(s, p, form))
}

/// Quasi-norm distance of `v` to a reference field living on another mesh.
pub fn quasi_norm_sq_against<A: ScalarField, R: ScalarField>(
    v: &A,
    reference: &Located<R>,
    p: f64,
    form: QuasiNormForm,
) -> Result<Integral> {
    let degree = assembly_degree(v.space().degree().max(reference.field.space().degree()));
    integrate_against(v, reference, degree, v.subdivision_depth(), |s| quasi_integrand(s, p, form))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PLaplaceReport {
    pub p: f64,
    pub iterations: usize,
    pub level: f64,
    pub j_u: f64,
    pub j_ustar: f64,
    /// Energy of the fine reference, when one is supplied.
    pub j_ref: Option<f64>,
    pub quasi_u: Option<f64>,
    pub quasi_ustar: Option<f64>,
    pub quadrature_error_estimate: f64,
    /// `J(U*) <= J(U) + 1e-9 (1 + |J(U)|)`
    pub energy_ordering_holds: bool,
}

/// Solves, truncates at the plain boundary supremum and compares energies.
pub fn plap_cutoff_compare(
    space: &Arc<FESpace>,
    spec: &PLaplaceSpec,
    tol: f64,
    reference: Option<&Located<FEFunction>>,
) -> Result<PLaplaceReport> {
    let sol = solve_plaplace(space, spec, tol)?;
    let u = sol.solution;
    let ustar = make_cutoff(&u, CutoffMode::PlainSup)?;
    let ju = p_energy(&u, spec)?;
    let js = p_energy(&ustar, spec)?;
    let mut quad = ju.error_estimate + js.error_estimate;
    let (mut j_ref, mut quasi_u, mut quasi_ustar) = (None, None, None);
    if let Some(r) = reference {
        j_ref = Some(p_energy(&r.field, spec)?.value);
        let qu = quasi_norm_sq_against(&u, r, spec.p, QuasiNormForm::Gradient)?;
        let qs = quasi_norm_sq_against(&ustar, r, spec.p, QuasiNormForm::Gradient)?;
        quad += qu.error_estimate + qs.error_estimate;
        quasi_u = Some(qu.value);
        quasi_ustar = Some(qs.value);
    }
    Ok(PLaplaceReport {
        p: spec.p,
        iterations: sol.iterations,
        level: ustar.level(),
        j_u: ju.value,
        j_ustar: js.value,
        j_ref,
        quasi_u,
        quasi_ustar,
        quadrature_error_estimate: quad,
        energy_ordering_holds: js.value <= ju.value + 1e-9 * (1.0 + ju.value.abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, ProblemSpec};
    use crate::data::boundary_spike;
    use crate::mesh::{generate, MeshFamily, MeshKind};

    fn space(kind: MeshKind, n: usize, degree: usize, seed: u64) -> Arc<FESpace> {
        let mesh = generate(&MeshFamily::new(kind, n, 0.2, seed)).unwrap();
        FESpace::new(Arc::new(mesh), degree).unwrap()
    }

    #[test]
    fn exponent_range() {
        assert!(PLaplaceSpec::new(1.1, 0.0, 0.0).is_err());
        assert!(PLaplaceSpec::new(8.5, 0.0, 0.0).is_err());
        assert!(PLaplaceSpec::new(1.2, 0.0, 0.0).is_ok());
        assert!(PLaplaceSpec::new(2.0, 0.0, 0.0).unwrap().with_epsilon(-1.0).is_err());
    }

    #[test]
    fn energy_of_linear_field() {
        let s = space(MeshKind::Perturbed, 4, 2, 1);
        let x = FEFunction::interpolate_scalar(s.clone(), |p| p[0]).unwrap();
        for p in [1.5, 2.0, 3.0, 7.0] {
            let spec = PLaplaceSpec::new(p, 0.0, 0.0).unwrap();
            assert!((p_energy(&x, &spec).unwrap().value - 1.0 / p).abs() < 1e-12);
        }
        let one = FEFunction::interpolate_scalar(s, |_| 1.0).unwrap();
        let spec = PLaplaceSpec::new(3.0, 0.0, 0.0).unwrap();
        assert!(p_energy(&one, &spec).unwrap().value.abs() < 1e-30);
    }

    #[test]
    fn linear_data_is_reproduced() {
        let s = space(MeshKind::ObtuseBand, 4, 1, 3);
        for p in [1.5, 2.0, 3.0, 4.0] {
            let spec = PLaplaceSpec::new(p, 0.0, ScalarFunction::new(|x| 0.3 * x[0] - 0.7 * x[1])).unwrap();
            let sol = solve_plaplace(&s, &spec, 1e-10).unwrap();
            for (d, x) in s.dof_coords().iter().enumerate() {
                assert!((sol.solution.coefficients()[d] - (0.3 * x[0] - 0.7 * x[1])).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn p2_matches_linear_solve() {
        let s = space(MeshKind::Perturbed, 4, 2, 5);
        let g = ScalarFunction::new(|x| (2.0 * x[0]).sin() * x[1]);
        let f = ScalarFunction::new(|x| -1.0 - x[0]);
        let spec = PLaplaceSpec::new(2.0, f.clone(), g.clone()).unwrap();
        let sol = solve_plaplace(&s, &spec, 1e-10).unwrap();
        let lin = solve(&assemble(&s, &ProblemSpec::laplace(g).with_source(f)).unwrap(), 1e-12).unwrap();
        let gap = sol.solution.coefficients().iter().zip(lin.coefficients()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-8, "{gap}");
    }

    #[test]
    fn kacanov_energies_decrease_and_gradient_vanishes() {
        let s = space(MeshKind::ObtuseBand, 6, 1, 2);
        let g = boundary_spike(s.mesh_arc().clone(), 2, -1.0).unwrap();
        for p in [1.5, 3.0, 4.0] {
            let spec = PLaplaceSpec::new(p, -0.5, g.clone()).unwrap();
            let tol = 1e-9;
            let sol = solve_plaplace(&s, &spec, tol).unwrap();
            assert!(sol.energies.windows(2).all(|w| w[1] <= w[0]), "p = {p}");
            let j = *sol.energies.last().unwrap();
            assert!(sol.gradient_norm <= 10.0 * tol * (1.0 + j.abs()), "p = {p}: {}", sol.gradient_norm);
        }
    }

    #[test]
    fn quasi_norm_examples() {
        let s = space(MeshKind::Perturbed, 3, 1, 4);
        let x = FEFunction::interpolate_scalar(s.clone(), |p| p[0]).unwrap();
        let x2 = FEFunction::interpolate_scalar(s.clone(), |p| 2.0 * p[0]).unwrap();
        assert_eq!(quasi_norm_sq(&x, &x, 3.0, QuasiNormForm::Gradient).unwrap().value, 0.0);
        let q = quasi_norm_sq(&x, &x2, 4.0, QuasiNormForm::Gradient).unwrap().value;
        assert!((q - 9.0).abs() < 1e-12);
        let q2 = quasi_norm_sq(&x, &x2, 2.0, QuasiNormForm::Gradient).unwrap().value;
        assert!((q2 - 1.0).abs() < 1e-12);
        // literal form: (|x| + |2x|)^0 |x|^2 at p = 2
        let lit = quasi_norm_sq(&x, &x2, 2.0, QuasiNormForm::Value).unwrap().value;
        assert!((lit - 1.0 / 3.0).abs() < 1e-12);
        let other = space(MeshKind::Structured, 3, 1, 0);
        let y = FEFunction::interpolate_scalar(other, |p| p[0]).unwrap();
        assert!(quasi_norm_sq(&x, &y, 2.0, QuasiNormForm::Gradient).is_err());
        let located = Located::new(y);
        let q = quasi_norm_sq_against(&x2, &located, 4.0, QuasiNormForm::Gradient).unwrap();
        assert!((q.value - 9.0).abs() < 1e-10);
    }

    #[test]
    fn cutoff_comparison_on_monotone_data() {
        let s = space(MeshKind::Structured, 4, 1, 0);
        let spec = PLaplaceSpec::new(3.0, 0.0, ScalarFunction::new(|x| x[0] + x[1])).unwrap();
        let r = plap_cutoff_compare(&s, &spec, 1e-10, None).unwrap();
        assert_eq!(r.j_u, r.j_ustar);
        assert!(r.energy_ordering_holds);
    }
}
