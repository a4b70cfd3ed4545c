use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};

use super::matrix::{CovarianceMatrix, Quadrature};

/// Relative cut-off below which singular values are dropped in the pseudo-inverse.
pub const PINV_RELATIVE_TOL: f64 = 1e-12;

/// State of the remaining modes after an ideal homodyne measurement of one quadrature.
///
/// Computes the Schur complement `γ_A − γ_C (Π γ_B Π)^+ γ_Cᵀ`, where `γ_B` is the
/// measured mode's block and `Π` projects onto the measured quadrature. Mode order
/// of the remaining modes is preserved.
pub fn condition_on_homodyne(
    cm: &CovarianceMatrix,
    measured_mode: usize,
    quadrature: Quadrature,
) -> Result<CovarianceMatrix> {
    cm.check_mode(measured_mode)?;
    if cm.n_modes() < 2 {
        return Err(invalid("conditioning needs at least one unmeasured mode"));
    }
    let variance = cm.moment(measured_mode, quadrature, measured_mode, quadrature);
    if variance <= 0.0 {
        return Err(Error::DegenerateMeasurement { variance });
    }

    let m = cm.entries();
    let measured = [2 * measured_mode, 2 * measured_mode + 1];
    let rest: Vec<usize> = (0..cm.dim()).filter(|k| !measured.contains(k)).collect();

    let gamma_a = DMatrix::from_fn(rest.len(), rest.len(), |i, j| m[(rest[i], rest[j])]);
    let gamma_c = DMatrix::from_fn(rest.len(), 2, |i, j| m[(rest[i], measured[j])]);
    let mut projected = DMatrix::zeros(2, 2);
    let q = quadrature.offset();
    projected[(q, q)] = m[(measured[q], measured[q])];

    let pinv = pseudo_inverse(&projected);
    let conditioned = gamma_a - &gamma_c * pinv * gamma_c.transpose();
    Ok(CovarianceMatrix::from_symmetrized(conditioned))
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RELATIVE_TOL * largest;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let inv_sigma = DMatrix::from_diagonal(&svd.singular_values.map(|s| if s > cutoff { 1.0 / s } else { 0.0 }));
    v_t.transpose() * inv_sigma * u.transpose()
}

/// Passive two-mode mixing with power transmittance `transmittance`.
///
/// Outputs are `i' = √η·i + √(1−η)·j` and `j' = −√(1−η)·i + √η·j`, applied to both
/// quadratures.
pub fn apply_beamsplitter(
    cm: &CovarianceMatrix,
    mode_i: usize,
    mode_j: usize,
    transmittance: f64,
) -> Result<CovarianceMatrix> {
    cm.check_mode(mode_i)?;
    cm.check_mode(mode_j)?;
    if mode_i == mode_j {
        return Err(invalid("beamsplitter needs two distinct modes"));
    }
    if !(0.0..=1.0).contains(&transmittance) {
        return Err(invalid(format!(
            "transmittance must lie in [0, 1], got {transmittance}"
        )));
    }
    let t = transmittance.sqrt();
    let r = (1.0 - transmittance).sqrt();
    let mut s = DMatrix::identity(cm.dim(), cm.dim());
    for q in 0..2 {
        let (a, b) = (2 * mode_i + q, 2 * mode_j + q);
        s[(a, a)] = t;
        s[(a, b)] = r;
        s[(b, a)] = -r;
        s[(b, b)] = t;
    }
    Ok(congruence(cm, &s))
}

fn congruence(cm: &CovarianceMatrix, s: &DMatrix<f64>) -> CovarianceMatrix {
    CovarianceMatrix::from_symmetrized(s * cm.entries() * s.transpose())
}

/// Covariance of a two-mode squeezed thermal pair with single-mode variance `w`.
pub(crate) fn two_mode_squeezed(w: f64) -> Result<CovarianceMatrix> {
    if w.is_nan() || w < 1.0 {
        return Err(invalid(format!("two-mode squeezed variance must be >= 1, got {w}")));
    }
    let c = (w * w - 1.0).sqrt();
    CovarianceMatrix::from_rows(&[
        vec![w, 0.0, c, 0.0],
        vec![0.0, w, 0.0, -c],
        vec![c, 0.0, w, 0.0],
        vec![0.0, -c, 0.0, w],
    ])
}

/// Draws a random physical state `S·D·Sᵀ`: thermal diagonal `D ≥ I` followed by
/// random single-mode squeezers, rotations and pairwise beamsplitters.
///
/// `max_thermal` bounds the symplectic eigenvalues; `max_squeeze_db` bounds each
/// squeezer.
pub fn random_physical_state<R: Rng + ?Sized>(
    n_modes: usize,
    max_thermal: f64,
    max_squeeze_db: f64,
    rng: &mut R,
) -> CovarianceMatrix {
    let dim = 2 * n_modes;
    let mut d = DMatrix::zeros(dim, dim);
    for k in 0..n_modes {
        let nu = rng.random_range(1.0..=max_thermal.max(1.0));
        d[(2 * k, 2 * k)] = nu;
        d[(2 * k + 1, 2 * k + 1)] = nu;
    }
    let mut s = DMatrix::identity(dim, dim);
    for _ in 0..2 {
        for k in 0..n_modes {
            let db = rng.random_range(-max_squeeze_db..=max_squeeze_db);
            let r = 10f64.powf(db / 20.0);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let mut local = DMatrix::identity(dim, dim);
            let (sin, cos) = theta.sin_cos();
            let (a, b) = (2 * k, 2 * k + 1);
            // rotation ∘ squeeze
            local[(a, a)] = cos * r;
            local[(a, b)] = -sin / r;
            local[(b, a)] = sin * r;
            local[(b, b)] = cos / r;
            s = local * s;
        }
        for i in 0..n_modes {
            for j in (i + 1)..n_modes {
                let eta: f64 = rng.random_range(0.0..=1.0);
                let (t, r) = (eta.sqrt(), (1.0 - eta).sqrt());
                let mut bs = DMatrix::identity(dim, dim);
                for q in 0..2 {
                    let (a, b) = (2 * i + q, 2 * j + q);
                    bs[(a, a)] = t;
                    bs[(a, b)] = r;
                    bs[(b, a)] = -r;
                    bs[(b, b)] = t;
                }
                s = bs * s;
            }
        }
    }
    CovarianceMatrix::from_symmetrized(&s * d * s.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::PHYSICAL_TOL;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_matrix_eq(a: &CovarianceMatrix, b: &CovarianceMatrix, tol: f64) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.entries().iter().zip(b.entries().iter()) {
            assert_abs_diff_eq!(x, y, epsilon = tol);
        }
    }

    #[test]
    fn conditioning_on_uncorrelated_mode_is_identity() {
        let cm = CovarianceMatrix::vacuum(2);
        let out = condition_on_homodyne(&cm, 1, Quadrature::X).unwrap();
        assert_matrix_eq(&out, &CovarianceMatrix::vacuum(1), 0.0);
    }

    #[test]
    fn conditioning_matches_scalar_formula() {
        // Correlated X quadratures only: conditional variance a − c²/b.
        let cm = CovarianceMatrix::from_rows(&[
            vec![3.0, 0.0, 1.5, 0.0],
            vec![0.0, 2.0, 0.0, 0.4],
            vec![1.5, 0.0, 2.5, 0.0],
            vec![0.0, 0.4, 0.0, 1.1],
        ])
        .unwrap();
        let out = condition_on_homodyne(&cm, 1, Quadrature::X).unwrap();
        assert_abs_diff_eq!(out.get(0, 0), 3.0 - 1.5 * 1.5 / 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.get(1, 1), 2.0, epsilon = 1e-15);
        let out_p = condition_on_homodyne(&cm, 1, Quadrature::P).unwrap();
        assert_abs_diff_eq!(out_p.get(0, 0), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out_p.get(1, 1), 2.0 - 0.4 * 0.4 / 1.1, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_measurement() {
        let cm = CovarianceMatrix::diagonal(&[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            condition_on_homodyne(&cm, 1, Quadrature::X),
            Err(Error::DegenerateMeasurement { .. })
        ));
        assert!(condition_on_homodyne(&CovarianceMatrix::vacuum(1), 0, Quadrature::X).is_err());
        assert!(condition_on_homodyne(&CovarianceMatrix::vacuum(2), 2, Quadrature::X).is_err());
    }

    #[test]
    fn beamsplitter_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cm = random_physical_state(2, 3.0, 6.0, &mut rng);
        assert_matrix_eq(&apply_beamsplitter(&cm, 0, 1, 1.0).unwrap(), &cm, 1e-15);
        for eta in [0.0, 0.3, 0.77, 1.0] {
            let vac = apply_beamsplitter(&CovarianceMatrix::vacuum(2), 0, 1, eta).unwrap();
            assert_matrix_eq(&vac, &CovarianceMatrix::vacuum(2), 1e-15);
        }
        assert!(apply_beamsplitter(&cm, 0, 0, 0.5).is_err());
        assert!(apply_beamsplitter(&cm, 0, 1, 1.5).is_err());
        assert!(apply_beamsplitter(&cm, 0, 1, -0.1).is_err());
    }

    #[test]
    fn lossy_channel_on_modulated_squeezed_mode() {
        let (v_r, v_a, eta) = (0.5, 0.8, 0.3);
        let source = CovarianceMatrix::diagonal(&[v_r + v_a, 1.0 / v_r]).unwrap();
        let joint = source.direct_sum(&CovarianceMatrix::vacuum(1));
        // Environment in mode 1 ends up in Eve's hands.
        let out = apply_beamsplitter(&joint, 1, 0, eta).unwrap();
        assert_abs_diff_eq!(out.get(2, 2), eta + (1.0 - eta) * (v_r + v_a), epsilon = 1e-14);
        assert_abs_diff_eq!(out.get(0, 0), eta * (v_r + v_a) + 1.0 - eta, epsilon = 1e-14);
        assert_abs_diff_eq!(
            out.get(0, 2),
            (eta * (1.0 - eta)).sqrt() * (v_r + v_a - 1.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn two_mode_squeezed_is_pure() {
        let tms = two_mode_squeezed(5.0).unwrap();
        for nu in tms.symplectic_eigenvalues().unwrap() {
            assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-10);
        }
        assert!(two_mode_squeezed(0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn beamsplitter_preserves_physicality(seed in any::<u64>(), eta in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cm = random_physical_state(3, 4.0, 8.0, &mut rng);
            let before = cm.symplectic_eigenvalues().unwrap();
            let after = apply_beamsplitter(&cm, 0, 2, eta).unwrap();
            let nus = after.symplectic_eigenvalues().unwrap();
            prop_assert!(nus.iter().all(|&nu| nu >= 1.0 - PHYSICAL_TOL));
            for (a, b) in before.iter().zip(&nus) {
                prop_assert!((a - b).abs() < 1e-8 * a.max(1.0));
            }
        }

        #[test]
        fn conditioning_preserves_physicality_and_reduces_variance(
            seed in any::<u64>(), mode in 0usize..3, use_p in any::<bool>()
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cm = random_physical_state(3, 4.0, 8.0, &mut rng);
            let q = if use_p { Quadrature::P } else { Quadrature::X };
            let out = condition_on_homodyne(&cm, mode, q).unwrap();
            prop_assert_eq!(out.n_modes(), 2);
            prop_assert!(out.is_physical(PHYSICAL_TOL));
            let kept: Vec<usize> = (0..3).filter(|&m| m != mode).collect();
            let reduced = cm.select_modes(&kept).unwrap();
            for k in 0..4 {
                prop_assert!(out.get(k, k) <= reduced.get(k, k) * (1.0 + 1e-12));
            }
        }
    }
}
