//! Scattering theory for one-dimensional Schrödinger operators that are
//! short-range perturbations of finite-gap (algebro-geometric) backgrounds.

pub mod background;
pub mod cli;
pub mod error;
pub mod expr;
pub mod kdv_invariants;
pub mod ode;
pub mod panels;
pub mod perturbation;
pub mod quad;
pub mod reconstruction;
pub mod riemann_surface;
pub mod scattering;
pub mod spectral_shift;

pub use error::{Error, Result};
