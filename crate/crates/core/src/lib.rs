//! Radial inhomogeneous NLS with competing nonlinearities
//!
//! i u_t + Δu = |x|^{-b1}|u|^{p1-2}u - |x|^{-b2}|u|^{p2-2}u
//!
//! for radial fields on a cell-centered grid. The crate computes ground states
//! two ways (shooting and constrained descent), evaluates the static
//! functionals and scaling identities, assembles the linearized operators,
//! time-steps the Cauchy problem and evaluates virial/Morawetz diagnostics.

pub mod error;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod ode;
pub mod params;
pub mod shooting;
pub mod spectrum;
pub mod uniqueness;
pub mod variational;
pub mod virial;

pub use error::{Error, Result};
pub use functionals::{compute_functionals, FunctionalReport};
pub use grid::{RadialField, RadialGrid};
pub use params::{validate_params, AdmissibilityReport, ModelParams};

pub use num_complex::Complex64;
