//! Gaussian-state kernel in shot-noise units (vacuum variance 1).
//!
//! States are zero-mean and described entirely by their [`CovarianceMatrix`].
//! Information quantities are in bits.

mod entropy;
mod matrix;
mod ops;
mod units;

pub(crate) use entropy::von_neumann_entropy_with_tolerance;
pub use entropy::{entropy_g, von_neumann_entropy};
pub use matrix::{symplectic_form, CovarianceMatrix, Quadrature, PHYSICAL_TOL, SYMMETRY_TOL};
pub(crate) use ops::two_mode_squeezed;
pub use ops::{apply_beamsplitter, condition_on_homodyne, random_physical_state, PINV_RELATIVE_TOL};
pub use units::{db_to_snu, snu_to_db, Decibel};
