use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian::{apply_beamsplitter, CovarianceMatrix, Quadrature};
use crate::protocol::{build_joint_state, AliceMoments, JointState, ProtocolParams, SecurityReport, BOB, EVE};

use super::reconstruct::{ReconstructedCM, ALICE_P, COLUMN_INDEX};
use super::EmulationConfig;

/// Symplectic eigenvalues of estimated matrices may fall this far below one.
pub const DATA_PHYSICAL_TOL: f64 = 0.05;

/// Model prediction for the reconstructed `(A, B, E)` matrix, built with
/// Gaussian-state operations: detector losses as beamsplitters with vacuum, then
/// trusted noise on Bob's `X`. Eve's retained cloner arm (if any) is traced out.
pub fn expected_covariance(p: &ProtocolParams, cfg: &EmulationConfig) -> Result<CovarianceMatrix> {
    cfg.validate()?;
    let joint = build_joint_state(p)?;
    let (eta_b, eta_e) = cfg.effective_efficiencies();

    let channel = joint.cm.select_modes(&[BOB, EVE])?;
    let padded = channel.direct_sum(&CovarianceMatrix::vacuum(2));
    let detected = apply_beamsplitter(&padded, 0, 2, eta_b)?;
    let detected = apply_beamsplitter(&detected, 1, 3, eta_e)?;
    let detected = detected.select_modes(&[0, 1])?.add_noise(0, Quadrature::X, p.v_n)?;

    let mut m = DMatrix::zeros(6, 6);
    m.view_mut((2, 2), (4, 4)).copy_from(detected.entries());
    m[(0, 0)] = p.v_a;
    m[(ALICE_P, ALICE_P)] = cfg.alice_p_placeholder;
    let x_a_x_b = eta_b.sqrt() * joint.alice.x_a_x_b;
    let x_a_x_e = eta_e.sqrt() * joint.alice.x_a_x_e;
    m[(0, 2)] = x_a_x_b;
    m[(2, 0)] = x_a_x_b;
    m[(0, 4)] = x_a_x_e;
    m[(4, 0)] = x_a_x_e;
    CovarianceMatrix::new(m)
}

fn joint_from_reconstruction(cm: &CovarianceMatrix, v_n_trusted: f64) -> Result<JointState> {
    if cm.n_modes() != 3 {
        return Err(invalid(format!(
            "expected a 3-mode (A, B, E) matrix, got {} modes",
            cm.n_modes()
        )));
    }
    if !(v_n_trusted >= 0.0 && v_n_trusted.is_finite()) {
        return Err(invalid(format!(
            "trusted noise must be non-negative, got {v_n_trusted}"
        )));
    }
    let detected = cm.select_modes(&[1, 2])?;
    detected.ensure_physical(DATA_PHYSICAL_TOL)?;

    let mut channel = detected.into_entries();
    channel[(0, 0)] -= v_n_trusted;
    if channel[(0, 0)] <= 0.0 {
        return Err(invalid(format!(
            "trusted noise {v_n_trusted} exceeds Bob's measured X variance {}",
            channel[(0, 0)] + v_n_trusted
        )));
    }
    Ok(JointState {
        cm: CovarianceMatrix::new(channel)?,
        trusted_noise: v_n_trusted,
        alice: AliceMoments {
            v_a: cm.moment(0, Quadrature::X, 0, Quadrature::X),
            x_a_x_b: cm.moment(0, Quadrature::X, 1, Quadrature::X),
            x_a_x_e: cm.moment(0, Quadrature::X, 2, Quadrature::X),
        },
    })
}

/// Security quantities from a reconstructed `(A, B, E)` matrix.
///
/// `v_n_trusted` is removed from Bob's `X` for the channel state and re-enters
/// only through his measurement, exactly as in the analytic model. The `(B, E)`
/// block must be physical to within [`DATA_PHYSICAL_TOL`].
pub fn security_from_data(recon: &ReconstructedCM, beta: f64, v_n_trusted: f64) -> Result<SecurityReport> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("beta must lie in (0, 1], got {beta}")));
    }
    joint_from_reconstruction(&recon.cm, v_n_trusted)?.report_with_tolerance(beta, DATA_PHYSICAL_TOL)
}

/// Data-derived report with delta-method standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityEstimate {
    pub report: SecurityReport,
    /// One standard deviation per report field; NaN where the report is not
    /// differentiable at the estimate.
    pub sigma: SecurityReport,
}

fn to_array(r: &SecurityReport) -> [f64; 8] {
    [
        r.i_ab,
        r.chi_e,
        r.key_rate,
        r.c_eb,
        r.c_ea,
        r.i_eb_classical,
        r.i_ea_classical,
        r.qmi_eb,
    ]
}

fn from_array(a: [f64; 8]) -> SecurityReport {
    SecurityReport {
        i_ab: a[0],
        chi_e: a[1],
        key_rate: a[2],
        c_eb: a[3],
        c_ea: a[4],
        i_eb_classical: a[5],
        i_ea_classical: a[6],
        qmi_eb: a[7],
    }
}

/// [`security_from_data`] plus uncertainty propagated from the sample moments.
///
/// Uses Isserlis' theorem for the covariance of second-moment estimates,
/// `Cov(Sᵢⱼ, Sₖₗ) = (σᵢₖσⱼₗ + σᵢₗσⱼₖ)/n`, and central differences for the gradient.
pub fn security_estimate(recon: &ReconstructedCM, beta: f64, v_n_trusted: f64) -> Result<SecurityEstimate> {
    let report = security_from_data(recon, beta, v_n_trusted)?;
    let n = recon.n_samples as f64;

    let sigma_of = |i: usize, j: usize| recon.cm.get(COLUMN_INDEX[i], COLUMN_INDEX[j]);
    let pairs: Vec<(usize, usize)> = (0..5).flat_map(|i| (i..5).map(move |j| (i, j))).collect();

    let mut gradients = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let h = 1e-5 * (sigma_of(i, i) * sigma_of(j, j)).sqrt();
        let eval = |delta: f64| -> Option<[f64; 8]> {
            let mut m = recon.cm.entries().clone();
            let (a, b) = (COLUMN_INDEX[i], COLUMN_INDEX[j]);
            m[(a, b)] += delta;
            if a != b {
                m[(b, a)] += delta;
            }
            let cm = CovarianceMatrix::new(m).ok()?;
            let r = joint_from_reconstruction(&cm, v_n_trusted)
                .and_then(|js| js.report_with_tolerance(beta, DATA_PHYSICAL_TOL))
                .ok()?;
            Some(to_array(&r))
        };
        let grad = match (eval(h), eval(-h)) {
            (Some(up), Some(down)) => {
                let mut g = [0.0; 8];
                for k in 0..8 {
                    g[k] = (up[k] - down[k]) / (2.0 * h);
                }
                g
            }
            _ => [f64::NAN; 8],
        };
        gradients.push(grad);
    }

    let mut variance = [0.0; 8];
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for (b, &(k, l)) in pairs.iter().enumerate() {
            let cov = (sigma_of(i, k) * sigma_of(j, l) + sigma_of(i, l) * sigma_of(j, k)) / n;
            for f in 0..8 {
                variance[f] += gradients[a][f] * cov * gradients[b][f];
            }
        }
    }
    Ok(SecurityEstimate {
        report,
        sigma: from_array(variance.map(|v| v.max(0.0).sqrt())),
    })
}
