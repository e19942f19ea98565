//! Continuous Lagrange P1/P2 spaces and finite-element functions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Largest number of local basis functions (P2).
pub const MAX_LOCAL_DOFS: usize = 6;

/// Local P2 edge dofs, in order: edges (0,1), (1,2), (2,0).
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Debug)]
pub struct FESpace {
    mesh: Arc<Mesh>,
    degree: usize,
    dof_count: usize,
    dof_map: Vec<[usize; MAX_LOCAL_DOFS]>,
    dof_coords: Vec<Point>,
    boundary_dofs: Vec<usize>,
    edge_dofs: HashMap<(usize, usize), usize>,
    bary_grads: Vec<[[f64; 2]; 3]>,
    areas: Vec<f64>,
}

impl FESpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<Self>> {
        if degree != 1 && degree != 2 {
            return Err(Error::Unsupported(format!("element degree {degree} (only 1 and 2)")));
        }
        let nv = mesh.vertex_count();
        let mut dof_coords: Vec<Point> = mesh.vertices().to_vec();
        let mut edge_index = HashMap::new();
        if degree == 2 {
            for (k, (a, b)) in mesh.edges().into_iter().enumerate() {
                edge_index.insert((a, b), nv + k);
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                dof_coords.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        let edge_dof = |a: usize, b: usize| edge_index[&(a.min(b), a.max(b))];
        let dof_map = mesh
            .triangles()
            .iter()
            .map(|tri| {
                let mut local = [usize::MAX; MAX_LOCAL_DOFS];
                local[..3].copy_from_slice(tri);
                if degree == 2 {
                    for (k, [i, j]) in LOCAL_EDGES.iter().enumerate() {
                        local[3 + k] = edge_dof(tri[*i], tri[*j]);
                    }
                }
                local
            })
            .collect();
        let mut boundary_dofs = mesh.boundary_vertices();
        if degree == 2 {
            boundary_dofs.extend(
                mesh.boundary_edges()
                    .iter()
                    .map(|e| edge_dof(e.vertices[0], e.vertices[1])),
            );
            boundary_dofs.sort_unstable();
        }
        let bary_grads = (0..mesh.triangle_count())
            .map(|t| mesh.barycentric_gradients(t))
            .collect();
        let areas = (0..mesh.triangle_count()).map(|t| mesh.signed_area(t)).collect();
        Ok(Arc::new(FESpace {
            dof_count: dof_coords.len(),
            mesh,
            degree,
            dof_map,
            dof_coords,
            boundary_dofs,
            edge_dofs: edge_index,
            bary_grads,
            areas,
        }))
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    pub fn local_dofs(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    /// Global dof indices of triangle `t` (length [`FESpace::local_dofs`]).
    pub fn dofs(&self, t: usize) -> &[usize] {
        &self.dof_map[t][..self.local_dofs()]
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    /// Sorted dofs whose basis functions are nonzero on the boundary.
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    /// Midpoint dof of the edge between vertices `a` and `b` (P2 only).
    pub fn edge_dof(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_dofs.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn bary_gradients(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.bary_grads[t]
    }

    /// Local basis values at barycentric point `l`.
    pub fn basis_values(&self, l: [f64; 3]) -> [f64; MAX_LOCAL_DOFS] {
        match self.degree {
            1 => [l[0], l[1], l[2], 0.0, 0.0, 0.0],
            _ => [
                l[0] * (2.0 * l[0] - 1.0),
                l[1] * (2.0 * l[1] - 1.0),
                l[2] * (2.0 * l[2] - 1.0),
                4.0 * l[0] * l[1],
                4.0 * l[1] * l[2],
                4.0 * l[2] * l[0],
            ],
        }
    }

    /// Physical gradients of the local basis on triangle `t`.
    pub fn basis_gradients(&self, t: usize, l: [f64; 3]) -> [[f64; 2]; MAX_LOCAL_DOFS] {
        let g = &self.bary_grads[t];
        let mut out = [[0.0; 2]; MAX_LOCAL_DOFS];
        match self.degree {
            1 => out[..3].copy_from_slice(g),
            _ => {
                for i in 0..3 {
                    let s = 4.0 * l[i] - 1.0;
                    out[i] = [s * g[i][0], s * g[i][1]];
                }
                for (k, [i, j]) in LOCAL_EDGES.iter().enumerate() {
                    let (i, j) = (*i, *j);
                    out[3 + k] = [
                        4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
                        4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
                    ];
                }
            }
        }
        out
    }
}

fn check_bary(bary: [f64; 3]) -> Result<()> {
    let sum: f64 = bary.iter().sum();
    if bary.iter().any(|&b| b < -1e-12) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Data(format!(
            "invalid barycentric coordinates {bary:?} (must be nonnegative and sum to 1)"
        )));
    }
    Ok(())
}

/// Coefficient vector over an [`FESpace`], with `components` values per dof
/// stored interleaved (`coefficients[dof * m + c]`).
#[derive(Clone, Debug)]
pub struct FEFunction {
    space: Arc<FESpace>,
    components: usize,
    coefficients: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FESpace>, components: usize, coefficients: Vec<f64>) -> Result<Self> {
        if components == 0 || components > 2 {
            return Err(Error::Unsupported(format!("{components} components (1 or 2 supported)")));
        }
        if coefficients.len() != space.dof_count() * components {
            return Err(Error::Data(format!(
                "expected {} coefficients, got {}",
                space.dof_count() * components,
                coefficients.len()
            )));
        }
        if let Some(i) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(Error::Data(format!("coefficient {i} is not finite")));
        }
        Ok(FEFunction { space, components, coefficients })
    }

    pub fn zeros(space: Arc<FESpace>, components: usize) -> Self {
        let n = space.dof_count() * components;
        FEFunction { space, components, coefficients: vec![0.0; n] }
    }

    /// Nodal interpolation: `g` fills the `m` component values at a dof coordinate.
    pub fn interpolate(
        space: Arc<FESpace>,
        components: usize,
        g: impl Fn(Point, &mut [f64]),
    ) -> Result<Self> {
        let mut coefficients = vec![0.0; space.dof_count() * components];
        for (dof, x) in space.dof_coords().iter().enumerate() {
            let out = &mut coefficients[dof * components..(dof + 1) * components];
            g(*x, out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "interpolated function is not finite at ({}, {})",
                    x[0], x[1]
                )));
            }
        }
        FEFunction::new(space, components, coefficients)
    }

    pub fn interpolate_scalar(space: Arc<FESpace>, g: impl Fn(Point) -> f64) -> Result<Self> {
        FEFunction::interpolate(space, 1, |x, out| out[0] = g(x))
    }

    pub fn interpolate_vector(space: Arc<FESpace>, g: impl Fn(Point) -> [f64; 2]) -> Result<Self> {
        FEFunction::interpolate(space, 2, |x, out| out.copy_from_slice(&g(x)))
    }

    pub fn space(&self) -> &Arc<FESpace> {
        &self.space
    }

    pub fn mesh(&self) -> &Mesh {
        self.space.mesh()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn dof_value(&self, dof: usize, component: usize) -> f64 {
        self.coefficients[dof * self.components + component]
    }

    /// One component as a scalar function on the same space.
    pub fn component(&self, c: usize) -> FEFunction {
        let coefficients = self
            .coefficients
            .chunks(self.components)
            .map(|v| v[c])
            .collect();
        FEFunction { space: self.space.clone(), components: 1, coefficients }
    }

    /// Value of component `c` on triangle `t`; inputs are not checked.
    pub fn component_value(&self, t: usize, bary: [f64; 3], c: usize) -> f64 {
        let phi = self.space.basis_values(bary);
        self.space
            .dofs(t)
            .iter()
            .zip(phi)
            .map(|(&d, p)| p * self.coefficients[d * self.components + c])
            .sum()
    }

    pub fn component_gradient(&self, t: usize, bary: [f64; 3], c: usize) -> [f64; 2] {
        let grads = self.space.basis_gradients(t, bary);
        let mut g = [0.0; 2];
        for (&d, gr) in self.space.dofs(t).iter().zip(grads) {
            let v = self.coefficients[d * self.components + c];
            g[0] += v * gr[0];
            g[1] += v * gr[1];
        }
        g
    }

    /// Checked evaluation of all components.
    pub fn eval(&self, t: usize, bary: [f64; 3]) -> Result<Vec<f64>> {
        self.check_triangle(t)?;
        check_bary(bary)?;
        Ok((0..self.components)
            .map(|c| self.component_value(t, bary, c))
            .collect())
    }

    /// Checked gradient evaluation: one `[d/dx, d/dy]` pair per component.
    pub fn eval_gradient(&self, t: usize, bary: [f64; 3]) -> Result<Vec<[f64; 2]>> {
        self.check_triangle(t)?;
        check_bary(bary)?;
        Ok((0..self.components)
            .map(|c| self.component_gradient(t, bary, c))
            .collect())
    }

    fn check_triangle(&self, t: usize) -> Result<()> {
        let len = self.mesh().triangle_count();
        if t >= len {
            return Err(Error::OutOfRange { index: t, len });
        }
        Ok(())
    }

    /// Text serialization (`fef v1`).
    pub fn to_text(&self) -> String {
        let mut s = String::from("fef v1\n");
        let _ = writeln!(s, "degree {}", self.space.degree());
        let _ = writeln!(s, "components {}", self.components);
        let _ = writeln!(s, "dofs {}", self.space.dof_count());
        for v in self.coefficients.chunks(self.components) {
            let line: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_text(space: Arc<FESpace>, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut next = || {
            lines.next().ok_or(Error::Parse {
                line: text.lines().count(),
                message: "unexpected end of input".into(),
            })
        };
        let (line, header) = next()?;
        if header != "fef v1" {
            return Err(Error::Parse { line, message: format!("bad header `{header}`") });
        }
        let mut keyed = |key: &str| -> Result<usize> {
            let (line, content) = next()?;
            let mut it = content.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>)) {
                (Some(k), Some(Ok(v))) if k == key => Ok(v),
                _ => Err(Error::Parse { line, message: format!("expected `{key} <n>`") }),
            }
        };
        let degree = keyed("degree")?;
        let m = keyed("components")?;
        let n = keyed("dofs")?;
        if degree != space.degree() || n != space.dof_count() {
            return Err(Error::Data(format!(
                "function of degree {degree} with {n} dofs does not match space \
                 (degree {}, {} dofs)",
                space.degree(),
                space.dof_count()
            )));
        }
        let mut coefficients = Vec::with_capacity(n * m);
        for _ in 0..n {
            let (line, content) = next()?;
            let vals: Vec<&str> = content.split_whitespace().collect();
            if vals.len() != m {
                return Err(Error::Parse { line, message: format!("expected {m} values") });
            }
            for v in vals {
                coefficients.push(v.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse `{v}`"),
                })?);
            }
        }
        FEFunction::new(space, m, coefficients)
    }
}
