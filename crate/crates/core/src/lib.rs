//! Collocation boundary-element electrostatics for high-voltage geometries.
//!
//! The crate solves for a virtual surface charge density on curved
//! (6-node quadratic) triangle meshes, with electrodes at prescribed
//! potential, floating conductors and thin floating sheets fixed by charge
//! neutrality, and dielectric interfaces. From the density it evaluates the
//! potential and electric field anywhere in space, traces field lines and
//! evaluates the streamer-inception criterion `∫ α_eff(|E|) ds > K_str`
//! along them.
//!
//! Pipeline:
//!
//! ```text
//! mesh::load_mesh -> assembly::assemble -> solver::solve -> postprocess::*
//! ```
//!
//! The dense system is assembled row by row (one collocation point per
//! worker), with regular and singular pairs integrated in a first pass and
//! near-singular pairs deferred to a second pass. Rows are grouped into
//! independent blocks; the result is bitwise identical for any block or
//! worker count.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod assembly;
pub mod cli;
pub mod config;
pub mod fixtures;
pub mod kernels;
pub mod mesh;
pub mod postprocess;
pub mod quadrature;
pub mod solver;

/// Three-component real vector used for points, normals and fields.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Vacuum permittivity in F/m.
pub const EPS0: f64 = 8.854_187_812_8e-12;

pub use assembly::{assemble, AssemblyConfig, RowKind, SystemMatrix};
pub use config::Config;
pub use mesh::{load_mesh, SurfaceMesh};
pub use postprocess::{Evaluator, FieldLine, IonizationModel};
pub use quadrature::{PairClass, QuadConfig, Rule};
pub use solver::{solve, Solution, SolverConfig};
