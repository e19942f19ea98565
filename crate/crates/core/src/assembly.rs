//! Assembly and solution of the Dirichlet reaction-diffusion problem
//! `(grad u, grad v) + (c u, v) = (f, v)` with `c >= 0` and `f <= 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FESpace, MAX_LOCAL_DOFS};
use crate::linalg::{pcg, CsrMatrix};
use crate::mesh::Point;
use crate::quadrature::quadrature;

/// Largest system handled by [`dense_oracle`].
pub const DENSE_ORACLE_MAX_DOFS: usize = 500;

/// A pointwise scalar function; constants are kept symbolic so that
/// identically-zero coefficients can be recognized.
#[derive(Clone)]
pub enum ScalarFunction {
    Constant(f64),
    Function(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl ScalarFunction {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFunction::Function(Arc::new(f))
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            ScalarFunction::Constant(v) => *v,
            ScalarFunction::Function(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarFunction::Constant(v) if *v == 0.0)
    }
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFunction::Constant(v) => write!(f, "Constant({v})"),
            ScalarFunction::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl From<f64> for ScalarFunction {
    fn from(v: f64) -> Self {
        ScalarFunction::Constant(v)
    }
}

/// Data of the linear model problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    /// Reaction coefficient, `c >= 0`.
    pub c: ScalarFunction,
    /// Source density, `f <= 0`; the load functional is `F(v) = (f, v)`.
    pub f: ScalarFunction,
    /// Dirichlet data.
    pub g: ScalarFunction,
    /// Exponent; only the p-Laplace pipeline uses values other than 2.
    pub p: f64,
}

impl ProblemSpec {
    /// Pure Laplace problem with the given boundary data.
    pub fn laplace(g: impl Into<ScalarFunction>) -> Self {
        ProblemSpec { c: 0.0.into(), f: 0.0.into(), g: g.into(), p: 2.0 }
    }

    pub fn with_reaction(mut self, c: impl Into<ScalarFunction>) -> Self {
        self.c = c.into();
        self
    }

    pub fn with_source(mut self, f: impl Into<ScalarFunction>) -> Self {
        self.f = f.into();
        self
    }
}

/// Linear system over the free dofs after symmetric elimination of the
/// Dirichlet dofs. The full (pre-elimination) matrix and load vector are kept
/// for residual and energy evaluation.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub space: Arc<FESpace>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub free_dofs: Vec<usize>,
    pub constrained_dofs: Vec<usize>,
    pub constrained_values: Vec<f64>,
    pub full_matrix: CsrMatrix,
    pub load: Vec<f64>,
}

impl SparseSystem {
    /// Global coefficient vector from free-dof values and the stored boundary values.
    pub fn expand(&self, free_values: &[f64]) -> Result<FEFunction> {
        let mut coeffs = vec![0.0; self.space.dof_count()];
        for (&d, &v) in self.free_dofs.iter().zip(free_values) {
            coeffs[d] = v;
        }
        for (&d, &v) in self.constrained_dofs.iter().zip(&self.constrained_values) {
            coeffs[d] = v;
        }
        FEFunction::new(self.space.clone(), 1, coeffs)
    }

    /// Galerkin residual `a(u, phi_i) - F(phi_i)` for every free dof `i`.
    pub fn residual(&self, u: &FEFunction) -> Vec<f64> {
        let au = self.full_matrix.apply(u.coefficients());
        self.free_dofs.iter().map(|&d| au[d] - self.load[d]).collect()
    }

    /// Discrete energy `a(u, u) / 2 - F(u)` of a field in the same space.
    pub fn energy(&self, u: &FEFunction) -> f64 {
        let c = u.coefficients();
        0.5 * self.full_matrix.form(c, c) - crate::linalg::dot(&self.load, c)
    }
}

/// Quadrature degree used for assembly and energies of degree-`k` fields.
pub fn assembly_degree(element_degree: usize) -> usize {
    2 * element_degree + 2
}

/// Assembles the weak form
/// `(w grad u, grad v) + (c u, v) = (f, v)` with pointwise diffusion weight
/// `w(t, bary, x) > 0` and eliminates the Dirichlet dofs (`u = g`).
pub fn assemble_weighted<W>(
    space: &Arc<FESpace>,
    weight: W,
    c: &ScalarFunction,
    f: &ScalarFunction,
    g: &ScalarFunction,
) -> Result<SparseSystem>
where
    W: Fn(usize, [f64; 3], Point) -> f64,
{
    let rule = quadrature(assembly_degree(space.degree()))?;
    let mesh = space.mesh();
    let nd = space.local_dofs();
    let n = space.dof_count();
    let mut triplets = Vec::with_capacity(mesh.triangle_count() * nd * nd);
    let mut load = vec![0.0; n];
    for t in 0..mesh.triangle_count() {
        let area = space.area(t);
        let mut ke = [[0.0; MAX_LOCAL_DOFS]; MAX_LOCAL_DOFS];
        let mut fe = [0.0; MAX_LOCAL_DOFS];
        for (l, w) in rule.iter() {
            let x = mesh.point_at(t, l);
            let cx = c.eval(x);
            let fx = f.eval(x);
            if !(cx >= 0.0) {
                return Err(Error::SignCondition { what: format!("reaction c = {cx} < 0"), x: x[0], y: x[1] });
            }
            if !(fx <= 0.0) {
                return Err(Error::SignCondition { what: format!("source f = {fx} > 0"), x: x[0], y: x[1] });
            }
            let kx = weight(t, l, x);
            let phi = space.basis_values(l);
            let grad = space.basis_gradients(t, l);
            let wa = 2.0 * w * area;
            for i in 0..nd {
                fe[i] += wa * fx * phi[i];
                for j in i..nd {
                    ke[i][j] += wa
                        * (kx * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1])
                            + cx * phi[i] * phi[j]);
                }
            }
        }
        let dofs = space.dofs(t);
        for i in 0..nd {
            load[dofs[i]] += fe[i];
            for j in 0..nd {
                let v = if i <= j { ke[i][j] } else { ke[j][i] };
                triplets.push((dofs[i], dofs[j], v));
            }
        }
    }
    let full_matrix = CsrMatrix::from_triplets(n, n, triplets);

    let constrained_dofs = space.boundary_dofs().to_vec();
    let constrained_values: Vec<f64> = constrained_dofs
        .iter()
        .map(|&d| g.eval(space.dof_coords()[d]))
        .collect();
    if let Some(i) = constrained_values.iter().position(|v| !v.is_finite()) {
        let x = space.dof_coords()[constrained_dofs[i]];
        return Err(Error::Data(format!("boundary data not finite at ({}, {})", x[0], x[1])));
    }
    let mut boundary_value = vec![None; n];
    for (&d, &v) in constrained_dofs.iter().zip(&constrained_values) {
        boundary_value[d] = Some(v);
    }
    let free_dofs: Vec<usize> = (0..n).filter(|&d| boundary_value[d].is_none()).collect();
    let mut free_index = vec![usize::MAX; n];
    for (k, &d) in free_dofs.iter().enumerate() {
        free_index[d] = k;
    }
    let mut reduced = Vec::new();
    let mut rhs = Vec::with_capacity(free_dofs.len());
    for &d in &free_dofs {
        let mut r = load[d];
        for (col, v) in full_matrix.row(d) {
            match boundary_value[col] {
                Some(gb) => r -= v * gb,
                None => reduced.push((free_index[d], free_index[col], v)),
            }
        }
        rhs.push(r);
    }
    let matrix = CsrMatrix::from_triplets(free_dofs.len(), free_dofs.len(), reduced);
    Ok(SparseSystem {
        space: space.clone(),
        matrix,
        rhs,
        free_dofs,
        constrained_dofs,
        constrained_values,
        full_matrix,
        load,
    })
}

/// Assembles the reaction-diffusion system of `spec`.
pub fn assemble(space: &Arc<FESpace>, spec: &ProblemSpec) -> Result<SparseSystem> {
    assemble_weighted(space, |_, _, _| 1.0, &spec.c, &spec.f, &spec.g)
}

/// Solves the system by preconditioned conjugate gradients.
pub fn solve(system: &SparseSystem, tol: f64) -> Result<FEFunction> {
    solve_from(system, tol, None)
}

/// As [`solve`], starting from the free-dof values of `initial`.
pub fn solve_from(system: &SparseSystem, tol: f64, initial: Option<&FEFunction>) -> Result<FEFunction> {
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(Error::Config(format!("solver tolerance {tol} outside (0, 1e-4]")));
    }
    let x0: Option<Vec<f64>> =
        initial.map(|u| system.free_dofs.iter().map(|&d| u.coefficients()[d]).collect());
    let max_iter = 20 * system.space.dof_count();
    let out = pcg(&system.matrix, &system.rhs, x0.as_deref(), tol, max_iter)?;
    system.expand(&out.solution)
}

/// Direct dense Cholesky solve of the same discrete problem (verification oracle).
pub fn dense_oracle(space: &Arc<FESpace>, spec: &ProblemSpec) -> Result<FEFunction> {
    if space.dof_count() > DENSE_ORACLE_MAX_DOFS {
        return Err(Error::TooLarge(format!(
            "dense oracle limited to {DENSE_ORACLE_MAX_DOFS} dofs, space has {}",
            space.dof_count()
        )));
    }
    let system = assemble(space, spec)?;
    let nf = system.free_dofs.len();
    if nf == 0 {
        return system.expand(&[]);
    }
    let a: DMatrix<f64> = system.matrix.to_dense();
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Solver("dense Cholesky factorization failed (matrix not SPD)".into()))?;
    let x = chol.solve(&DVector::from_vec(system.rhs.clone()));
    system.expand(x.as_slice())
}
