//! Lagrangian pseudospectral laboratory for the compressible free-surface
//! Euler equations in enthalpy form on a two-dimensional disk.

pub mod builder;
pub mod calculus;
pub mod elliptic;
pub mod energy;
pub mod eos;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod solver;
pub mod state;
pub mod symbolic;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
