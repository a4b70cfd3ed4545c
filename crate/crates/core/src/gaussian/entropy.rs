use crate::error::{Error, Result};

use super::matrix::{CovarianceMatrix, PHYSICAL_TOL};

/// Entropy in bits of a single thermal mode with symplectic eigenvalue `nu`
/// (vacuum at `nu = 1`).
///
/// Values within [`PHYSICAL_TOL`] below one are treated as pure.
pub fn entropy_g(nu: f64) -> Result<f64> {
    entropy_g_with_tolerance(nu, PHYSICAL_TOL)
}

pub(crate) fn entropy_g_with_tolerance(nu: f64, tol: f64) -> Result<f64> {
    if !nu.is_finite() || nu < 1.0 - tol {
        return Err(Error::UnphysicalEigenvalue { eigenvalue: nu });
    }
    if nu <= 1.0 {
        return Ok(0.0);
    }
    let plus = 0.5 * (nu + 1.0);
    let minus = 0.5 * (nu - 1.0);
    Ok(plus * plus.log2() - minus * minus.log2())
}

/// Von Neumann entropy in bits: the sum of [`entropy_g`] over the symplectic spectrum.
pub fn von_neumann_entropy(cm: &CovarianceMatrix) -> Result<f64> {
    cm.symplectic_eigenvalues()?.into_iter().map(entropy_g).sum()
}

pub(crate) fn von_neumann_entropy_with_tolerance(cm: &CovarianceMatrix, tol: f64) -> Result<f64> {
    cm.symplectic_eigenvalues()?
        .into_iter()
        .map(|nu| entropy_g_with_tolerance(nu, tol))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(entropy_g(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(entropy_g(3.0).unwrap(), 2.0, epsilon = 1e-15);
        // 50-digit mpmath evaluations of the closed form.
        assert_abs_diff_eq!(entropy_g(1.19164).unwrap(), 0.468_869_903_387_200_4, epsilon = 1e-14);
        assert_abs_diff_eq!(entropy_g(2.0).unwrap(), 1.377_443_751_081_734_3, epsilon = 1e-14);
    }

    #[test]
    fn clamps_rounding_noise_and_rejects_unphysical() {
        assert_eq!(entropy_g(1.0 - 5e-10).unwrap(), 0.0);
        assert!(matches!(entropy_g(0.99), Err(Error::UnphysicalEigenvalue { .. })));
        assert!(entropy_g(f64::NAN).is_err());
    }

    #[test]
    fn state_entropies() {
        assert_eq!(von_neumann_entropy(&CovarianceMatrix::vacuum(1)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            von_neumann_entropy(&CovarianceMatrix::vacuum(2)).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let thermal = CovarianceMatrix::diagonal(&[2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(
            von_neumann_entropy(&thermal).unwrap(),
            1.377_443_751_081_734_3,
            epsilon = 1e-14
        );
        let unphysical = CovarianceMatrix::diagonal(&[0.3, 0.3]).unwrap();
        assert!(von_neumann_entropy(&unphysical).is_err());
    }

    proptest! {
        #[test]
        fn strictly_increasing(a in 1.0f64..1e4, step in 1e-6f64..10.0) {
            prop_assert!(entropy_g(a + step).unwrap() > entropy_g(a).unwrap());
        }

        #[test]
        fn non_negative(nu in 1.0f64..1e6) {
            prop_assert!(entropy_g(nu).unwrap() >= 0.0);
        }
    }
}
