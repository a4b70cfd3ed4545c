//! Security analysis for continuous-variable QKD with squeezed states whose
//! modulation is tuned to cancel the eavesdropper's information.
//!
//! * [`gaussian`]: covariance matrices, symplectic spectra, entropies, homodyne
//!   conditioning and beamsplitters.
//! * [`protocol`]: the channel model, Holevo/Shannon quantities, key rates and
//!   the decoupling condition `v_r + v_a = 1`.
//! * [`finite_size`]: the finite-key penalty and reconciliation-efficiency thresholds.
//! * [`emulator`]: seeded Monte-Carlo sampling and covariance reconstruction.
//! * [`figures`]: sweep grids and the CSV series behind the standard plots.
//!
//! All variances are in shot-noise units with vacuum variance 1; information is in bits.

pub mod emulator;
pub mod error;
pub mod figures;
pub mod finite_size;
pub mod format;
pub mod gaussian;
pub mod protocol;

pub use error::{Error, Result};
pub use finite_size::{
    beta_threshold, delta_correction, key_rate_finite, security_region, BetaThreshold, FiniteSizeParams, SecurityCurve,
};
pub use gaussian::{CovarianceMatrix, Decibel, Quadrature};
pub use protocol::{
    build_joint_state, holevo_eb, key_rate_asymptotic, mutual_information_ab, security_report, Party, ProtocolParams,
    SecurityReport,
};
