//! Finite-element realization of 2D incompressible flow with dynamic slip
//! boundary conditions: energy spaces, the Stokes eigenbasis, time stepping,
//! the linearized flow and attractor-dimension bounds.

pub mod assembly;
pub mod bounds;
pub mod eigen;
pub mod error;
pub mod evolution;
pub mod io;
pub mod laws;
pub mod linearized;
pub mod mesh;
pub mod quadrature;
pub mod sparse;
pub mod spectrum;

pub use assembly::{build_spaces, DiscreteSystem, InnerProducts, VectorField, VelocitySpace};
pub use error::{Error, Result};
pub use laws::{BoundaryLaw, BoundaryModel, ConstitutiveLaw, StressModel};
pub use mesh::{build_disk_mesh, BoundaryFrame, Mesh, MeshQuality};
