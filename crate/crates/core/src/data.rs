//! Boundary data helpers.

use std::sync::Arc;

use crate::assembly::ScalarFunction;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, PointLocator};

/// `amplitude` times the P1 hat function of boundary vertex `vertex` on
/// `mesh`, extended by zero outside the mesh. Its boundary trace is piecewise
/// linear with breakpoints at mesh boundary vertices, so finer meshes that
/// keep those breakpoints represent it exactly.
pub fn boundary_spike(mesh: Arc<Mesh>, vertex: usize, amplitude: f64) -> Result<ScalarFunction> {
    if mesh.boundary_vertices().binary_search(&vertex).is_err() {
        return Err(Error::Config(format!("vertex {vertex} is not a boundary vertex")));
    }
    if !amplitude.is_finite() {
        return Err(Error::Config(format!("spike amplitude {amplitude} is not finite")));
    }
    let locator = PointLocator::new(&mesh);
    Ok(ScalarFunction::new(move |x| {
        let Some((t, bary)) = locator.locate(&mesh, x) else {
            return 0.0;
        };
        let tri = mesh.triangles()[t];
        tri.iter()
            .zip(bary)
            .filter(|(&v, _)| v == vertex)
            .map(|(_, b)| amplitude * b)
            .sum()
    }))
}
