//! Discrete maximum principles enforced by an a-posteriori cutoff.
//!
//! The crate solves scalar reaction-diffusion, vector Laplace and p-Laplace
//! model problems with conforming Lagrange elements on triangulations of the
//! unit square, truncates (or projects) the discrete solution onto the range
//! admitted by its boundary values, and measures energies and errors of both
//! fields so that the effect of the post-process can be certified.

pub mod analytics;
pub mod assembly;
pub mod convexproj;
pub mod cutoff;
pub mod data;
pub mod error;
pub mod fespace;
pub mod field;
pub mod integrate;
pub mod linalg;
pub mod mesh;
pub mod plap;
pub mod quadrature;

pub use error::{Error, Result};
