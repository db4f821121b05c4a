//! Finite element discretization and optimal control of the fractional heat
//! equation driven by the integral fractional Laplacian.

pub mod analysis;
pub mod assembly;
pub mod config;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod optimize;
pub mod oracle;
pub mod quadrature;
pub mod reference;
pub mod timestepping;
pub mod verify;

pub use error::{Error, Result, SolveError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
