//! Numerical laboratory for Dirichlet-to-Neumann maps of surfaces with one
//! boundary circle and for recovering holomorphic immersions from boundary
//! traces.

pub mod argument_principle;
pub mod boundary_calculus;
pub mod dn_backends;
pub mod experiments;
pub mod geometry_metrics;
pub mod holomorphic_structure;
pub mod near_boundary;
mod spectral;

pub use boundary_calculus::{BoundaryFunction, BoundaryOperator, OperatorKind, SobolevIndex};
