use std::sync::Arc;

use dmpcut_core::analytics::{energy, energy_gap_identity_check};
use dmpcut_core::assembly::{assemble, solve, ProblemSpec, ScalarFunction};
use dmpcut_core::convexproj::{integrate_projected, integrate_vector, ConvexRegion, ProjectedField, VectorIntegrand};
use dmpcut_core::cutoff::{integrate_cut, make_cutoff, CutIntegrand, CutoffField, CutoffMode};
use dmpcut_core::fespace::{FEFunction, FESpace};
use dmpcut_core::field::{sample_grid, Located, Repieced};
use dmpcut_core::mesh::{generate, Mesh, MeshFamily, MeshKind};
use dmpcut_core::plap::{p_energy, quasi_norm_sq, PLaplaceSpec, QuasiNormForm};
use dmpcut_core::quadrature::quadrature;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = MeshKind> {
    prop_oneof![Just(MeshKind::Structured), Just(MeshKind::Perturbed), Just(MeshKind::ObtuseBand)]
}

fn family_strategy() -> impl Strategy<Value = MeshFamily> {
    (kind_strategy(), 2usize..7, 0.0..0.45f64, any::<u64>())
        .prop_map(|(k, n, p, seed)| MeshFamily::new(k, n, p, seed))
}

fn space_of(family: &MeshFamily, degree: usize) -> Arc<FESpace> {
    FESpace::new(Arc::new(generate(family).unwrap()), degree).unwrap()
}

/// Smooth field plus random nodal noise, so that interior values regularly
/// overshoot the boundary trace.
fn random_field(space: &Arc<FESpace>, seed: u64) -> FEFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
    let noise = rng.random_range(0.0..1.5);
    let mut u = FEFunction::interpolate_scalar(space.clone(), |x| a * x[0] + b * x[1] * x[1] + c).unwrap();
    for v in u.coefficients_mut() {
        *v += noise * rng.random_range(-1.0..1.0);
    }
    u
}

/// Smooth field whose interior bump overshoots the boundary trace.
fn smooth_field(space: &Arc<FESpace>, seed: u64) -> FEFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let (bump, cx, cy) = (rng.random_range(0.5..3.0), rng.random_range(0.3..0.7), rng.random_range(0.3..0.7));
    FEFunction::interpolate_scalar(space.clone(), move |x| {
        let r2 = (x[0] - cx).powi(2) + (x[1] - cy).powi(2);
        a * x[0] + b * x[1] * x[1] + c + bump * (-8.0 * r2).exp()
    })
    .unwrap()
}

fn random_spec(seed: u64) -> ProblemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (c0, c1) = (rng.random_range(0.0..5.0), rng.random_range(0.0..2.0));
    let (f0, f1) = (rng.random_range(0.0..3.0), rng.random_range(0.0..1.0));
    ProblemSpec::laplace(0.0)
        .with_reaction(ScalarFunction::new(move |x| c0 + c1 * (3.0 * x[0]).sin().powi(2)))
        .with_source(ScalarFunction::new(move |x| -f0 - f1 * x[1] * x[1]))
}

fn euler_characteristic(mesh: &Mesh) -> i64 {
    mesh.vertex_count() as i64 - mesh.edges().len() as i64 + mesh.triangle_count() as i64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_meshes_tile_the_unit_square(family in family_strategy()) {
        let mesh = generate(&family).unwrap();
        prop_assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        prop_assert_eq!(euler_characteristic(&mesh), 1);
        prop_assert_eq!(generate(&family).unwrap().to_text(), mesh.to_text());
        let round_trip = Mesh::from_text(&mesh.to_text()).unwrap();
        prop_assert_eq!(round_trip, mesh);
    }

    #[test]
    fn partition_of_unity_and_gradient_consistency(family in family_strategy(), degree in 1usize..3, seed in any::<u64>()) {
        let space = space_of(&family, degree);
        let rule = quadrature(6).unwrap();
        for (l, _) in rule.iter() {
            let phi = space.basis_values(l);
            let sum: f64 = phi[..space.local_dofs()].iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-13);
        }
        let u = random_field(&space, seed);
        let located = Located::new(u.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-7;
        for _ in 0..10 {
            let t = rng.random_range(0..space.mesh().triangle_count());
            let (a, b) = (rng.random_range(0.1..0.8), rng.random_range(0.05..0.15));
            let l = [a, b, 1.0 - a - b];
            let x = space.mesh().point_at(t, l);
            let g = u.component_gradient(t, l, 0);
            for k in 0..2 {
                let mut xp = x;
                xp[k] += h;
                let mut xm = x;
                xm[k] -= h;
                // stay inside the triangle: finite differences of a piecewise field
                let (tp, lp) = located.locate(xp).unwrap();
                let (tm, lm) = located.locate(xm).unwrap();
                prop_assume!(tp == t && tm == t);
                let fd = (u.component_value(t, lp, 0) - u.component_value(t, lm, 0)) / (2.0 * h);
                prop_assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "fd {} vs {}", fd, g[k]);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_element_polynomials(family in family_strategy(), degree in 1usize..3) {
        let space = space_of(&family, degree);
        let p = move |x: [f64; 2]| if degree == 1 { 0.3 - 2.0 * x[0] + x[1] } else { x[0] * x[0] - 3.0 * x[0] * x[1] + 0.5 * x[1] };
        let u = FEFunction::interpolate_scalar(space.clone(), p).unwrap();
        let rule = quadrature(4).unwrap();
        for t in 0..space.mesh().triangle_count() {
            for (l, _) in rule.iter() {
                prop_assert!((u.component_value(t, l, 0) - p(space.mesh().point_at(t, l))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discrete_solution_is_galerkin_orthogonal_and_minimal(family in family_strategy(), degree in 1usize..3, seed in any::<u64>()) {
        let space = space_of(&family, degree);
        let mut spec = random_spec(seed);
        spec.g = ScalarFunction::new(|x| (2.0 * x[0]).cos() - x[1]);
        let sys = assemble(&space, &spec).unwrap();
        prop_assert_eq!(sys.matrix.transpose(), sys.matrix.clone());
        let tol = 1e-10;
        let u = solve(&sys, tol).unwrap();
        let rhs_norm = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        for r in sys.residual(&u) {
            prop_assert!(r.abs() <= tol * rhs_norm + 1e-14);
        }
        let j = sys.energy(&u);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let d = sys.free_dofs[rng.random_range(0..sys.free_dofs.len())];
            for eps in [1e-3, -1e-3] {
                let mut v = u.clone();
                v.coefficients_mut()[d] += eps;
                prop_assert!(j <= sys.energy(&v) + 1e-9);
            }
        }
    }

    #[test]
    fn cutoff_enforces_the_maximum_principle(family in family_strategy(), degree in 1usize..3, seed in any::<u64>(), positive in any::<bool>()) {
        let space = space_of(&family, degree);
        let u = random_field(&space, seed);
        let mode = if positive { CutoffMode::PositivePartSup } else { CutoffMode::PlainSup };
        let cut = make_cutoff(&u, mode).unwrap();
        if positive {
            prop_assert!(cut.level() >= 0.0);
        }
        let lu = Located::new(u.clone());
        let lc = Located::new(cut.clone());
        for x in sample_grid(40) {
            let (a, b) = (lu.value_at(x).unwrap(), lc.value_at(x).unwrap());
            prop_assert!(b <= cut.level() + 1e-13);
            prop_assert!(b <= a);
            if positive {
                prop_assert!(b.abs() <= a.abs());
            }
        }
        let du = integrate_cut(&CutoffField::at_level(&u, f64::INFINITY).unwrap(), &CutIntegrand::DirichletEnergy).unwrap();
        let dc = integrate_cut(&cut, &CutIntegrand::DirichletEnergy).unwrap();
        prop_assert!(dc.value <= du.value + 1e-10 * (1.0 + du.value) + dc.error_estimate);
    }

    #[test]
    fn cutoff_never_increases_the_energy(family in family_strategy(), degree in 1usize..3, seed in any::<u64>()) {
        let space = space_of(&family, degree);
        let u = random_field(&space, seed);
        let spec = random_spec(seed);
        let cut = make_cutoff(&u, CutoffMode::PositivePartSup).unwrap();
        let ju = energy(&Repieced { field: &u, pattern: &cut }, &spec).unwrap().value;
        let js = energy(&cut, &spec).unwrap().value;
        prop_assert!(js <= ju + 1e-10 * (1.0 + ju.abs()), "{} > {}", js, ju);
        // pure diffusion: the plain supremum is enough
        let laplace = ProblemSpec::laplace(0.0).with_source(spec.f.clone());
        let plain = make_cutoff(&u, CutoffMode::PlainSup).unwrap();
        let ju = energy(&Repieced { field: &u, pattern: &plain }, &laplace).unwrap().value;
        let js = energy(&plain, &laplace).unwrap().value;
        prop_assert!(js <= ju + 1e-10 * (1.0 + ju.abs()));
    }

    #[test]
    fn cutoff_is_idempotent(family in family_strategy(), seed in any::<u64>()) {
        let space = space_of(&family, 1);
        let u = random_field(&space, seed);
        let cut = make_cutoff(&u, CutoffMode::PlainSup).unwrap();
        // the cut field sampled at the nodes satisfies the maximum principle
        let nodal = FEFunction::new(space.clone(), 1, u.coefficients().iter().map(|v| v.min(cut.level())).collect()).unwrap();
        let again = make_cutoff(&nodal, CutoffMode::PlainSup).unwrap();
        prop_assert_eq!(again.level(), cut.level());
        let located = Located::new(again);
        let plain = Located::new(nodal);
        for x in sample_grid(30) {
            prop_assert!((located.value_at(x).unwrap() - plain.value_at(x).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn p2_cut_integrals_agree_across_depths(family in family_strategy(), seed in any::<u64>()) {
        let space = space_of(&family, 2);
        let u = smooth_field(&space, seed);
        let cut = make_cutoff(&u, CutoffMode::PlainSup).unwrap();
        let a = integrate_cut(&cut, &CutIntegrand::DirichletEnergy).unwrap();
        let b = integrate_cut(&cut.clone().with_depth(6), &CutIntegrand::DirichletEnergy).unwrap();
        prop_assert!((a.value - b.value).abs() <= a.error_estimate + 1e-12 * (1.0 + a.value));
    }

    #[test]
    fn energy_gap_identity(family in family_strategy(), degree in 1usize..3, seed in any::<u64>()) {
        let space = space_of(&family, degree);
        let mut spec = random_spec(seed);
        spec.g = ScalarFunction::new(|x| x[0] * x[1] - 0.5);
        let u = solve(&assemble(&space, &spec).unwrap(), 1e-12).unwrap();
        let mut v = u.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boundary = space.boundary_dofs();
        for (d, c) in v.coefficients_mut().iter_mut().enumerate() {
            if boundary.binary_search(&d).is_err() {
                *c += rng.random_range(-0.5..0.5);
            }
        }
        let jv = energy(&v, &spec).unwrap().value;
        prop_assert!(energy_gap_identity_check(&u, &v, &spec).unwrap() <= 1e-8 * (1.0 + jv.abs()));
    }

    #[test]
    fn projection_is_nonexpansive_and_idempotent(pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..12), pairs in prop::collection::vec(((-6.0..6.0f64, -6.0..6.0f64), (-6.0..6.0f64, -6.0..6.0f64)), 50)) {
        let pts: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
        let k = ConvexRegion::hull(&pts).unwrap();
        for ((a, b), (c, d)) in pairs {
            let (x, y) = ([a, b], [c, d]);
            let (px, py) = (k.project(x), k.project(y));
            let dp = ((px[0] - py[0]).powi(2) + (px[1] - py[1]).powi(2)).sqrt();
            let dx = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            prop_assert!(dp <= dx + 1e-12);
            let ppx = k.project(px);
            prop_assert!((ppx[0] - px[0]).abs() + (ppx[1] - px[1]).abs() < 1e-12);
            prop_assert!(k.contains(px, 1e-12));
        }
        for p in &pts {
            prop_assert!(k.contains(*p, 1e-9));
        }
    }

    #[test]
    fn projected_field_gradient_and_norm_bounds(family in family_strategy(), seed in any::<u64>(), origin in any::<bool>()) {
        let space = space_of(&family, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = FEFunction::interpolate_vector(space.clone(), |x| [x[0] - 0.3, x[1] * x[1]]).unwrap();
        for v in u.coefficients_mut() {
            *v += rng.random_range(-1.0..1.0);
        }
        let field = ProjectedField::onto(&u, dmpcut_core::convexproj::boundary_hull(&u, origin).unwrap()).unwrap();
        let e = integrate_projected(&field, VectorIntegrand::DirichletEnergy).unwrap();
        let e0 = integrate_vector(&u, VectorIntegrand::DirichletEnergy).unwrap();
        prop_assert!(e.value <= e0.value + e.error_estimate + 1e-12);
        let mesh = space.mesh();
        for t in 0..mesh.triangle_count() {
            for l in [[1.0 / 3.0; 3], [0.6, 0.3, 0.1]] {
                let p = field.value_in(t, l);
                prop_assert!(field.region().contains(p, 1e-12));
                if origin {
                    let v = [u.component_value(t, l, 0), u.component_value(t, l, 1)];
                    prop_assert!(p[0].hypot(p[1]) <= v[0].hypot(v[1]) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn p_energy_monotone_under_cutoff(family in family_strategy(), degree in 1usize..3, seed in any::<u64>(), p in 1.2..8.0f64) {
        let space = space_of(&family, degree);
        let u = random_field(&space, seed);
        let spec = PLaplaceSpec::new(p, -1.0, 0.0).unwrap();
        let cut = make_cutoff(&u, CutoffMode::PlainSup).unwrap();
        let ju = p_energy(&Repieced { field: &u, pattern: &cut }, &spec).unwrap().value;
        let js = p_energy(&cut, &spec).unwrap().value;
        prop_assert!(js <= ju + 1e-9 * (1.0 + ju.abs()));
    }

    #[test]
    fn quasi_norm_is_symmetric(family in family_strategy(), seed in any::<u64>(), p in 1.2..8.0f64) {
        let space = space_of(&family, 1);
        let u = random_field(&space, seed);
        let v = random_field(&space, seed.wrapping_add(1));
        for form in [QuasiNormForm::Gradient, QuasiNormForm::Value] {
            let a = quasi_norm_sq(&u, &v, p, form).unwrap().value;
            let b = quasi_norm_sq(&v, &u, p, form).unwrap().value;
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }
        prop_assert_eq!(quasi_norm_sq(&u, &u, p, QuasiNormForm::Gradient).unwrap().value, 0.0);
    }
}
