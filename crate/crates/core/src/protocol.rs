//! Analytic security quantities for the single-quadrature squeezed-state protocol.
//!
//! Alice draws `X_A ~ N(0, v_a)` and displaces the squeezed quadrature of a source
//! with variances `(v_r, 1/v_r + delta_v)`. The mode crosses a channel of
//! transmittance `eta` whose environment Eve keeps, and Bob measures `X` with
//! trusted electronic noise `v_n`. All quantities target reverse reconciliation:
//! the leakage that matters is between Eve and Bob.
//!
//! When `v_r + v_a = 1` and the channel is purely lossy, Eve's mode is
//! uncorrelated with Bob's outcome and the Holevo information vanishes for every
//! loss, detector noise and source purity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    apply_beamsplitter, condition_on_homodyne, entropy_g, two_mode_squeezed, von_neumann_entropy_with_tolerance,
    CovarianceMatrix, Quadrature, PHYSICAL_TOL,
};

/// Rounding slack for negative Holevo values before they count as a model error.
pub const HOLEVO_CLAMP_TOL: f64 = 1e-9;

/// Golden-section termination width in `v_a`.
pub const MODULATION_TOL: f64 = 1e-6;

/// Full parameterization of one protocol instance, all variances in SNU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Squeezed-quadrature variance; 1 for coherent states.
    pub v_r: f64,
    /// Excess noise on the anti-squeezed quadrature (variance `1/v_r + delta_v`).
    pub delta_v: f64,
    /// Gaussian modulation variance on `X`.
    pub v_a: f64,
    /// Channel transmittance.
    pub eta: f64,
    /// Untrusted channel excess noise, referred to the channel input.
    pub epsilon: f64,
    /// Trusted electronic noise of Bob's detector.
    pub v_n: f64,
    /// Reconciliation efficiency.
    pub beta: f64,
}

impl ProtocolParams {
    /// Pure squeezed source over a lossy channel with an ideal detector and `beta = 1`.
    pub fn squeezed(v_r: f64, v_a: f64, eta: f64) -> Self {
        Self {
            v_r,
            delta_v: 0.0,
            v_a,
            eta,
            epsilon: 0.0,
            v_n: 0.0,
            beta: 1.0,
        }
    }

    pub fn coherent(v_a: f64, eta: f64) -> Self {
        Self::squeezed(1.0, v_a, eta)
    }

    pub fn with_delta_v(self, delta_v: f64) -> Self {
        Self { delta_v, ..self }
    }

    pub fn with_v_a(self, v_a: f64) -> Self {
        Self { v_a, ..self }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    pub fn with_v_n(self, v_n: f64) -> Self {
        Self { v_n, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.v_r,
            self.delta_v,
            self.v_a,
            self.eta,
            self.epsilon,
            self.v_n,
            self.beta,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("protocol parameters must be finite: {self:?}")));
        }
        if !(self.v_r > 0.0 && self.v_r <= 1.0) {
            return Err(invalid(format!("v_r must lie in (0, 1], got {}", self.v_r)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        for (name, v) in [
            ("delta_v", self.delta_v),
            ("v_a", self.v_a),
            ("epsilon", self.epsilon),
            ("v_n", self.v_n),
        ] {
            if v < 0.0 {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Total variance of the modulated squeezed quadrature.
    pub fn signal_variance(&self) -> f64 {
        self.v_r + self.v_a
    }

    pub fn anti_squeezed_variance(&self) -> f64 {
        1.0 / self.v_r + self.delta_v
    }

    /// Alphabet-averaged source state `diag[v_r + v_a, 1/v_r + delta_v]`.
    pub fn source_covariance(&self) -> Result<CovarianceMatrix> {
        self.validate()?;
        CovarianceMatrix::diagonal(&[self.signal_variance(), self.anti_squeezed_variance()])
    }
}

/// Everything derived for one protocol instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub i_ab: f64,
    pub chi_e: f64,
    pub key_rate: f64,
    pub c_eb: f64,
    pub c_ea: f64,
    pub i_eb_classical: f64,
    pub i_ea_classical: f64,
    pub qmi_eb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Squared correlation coefficient between Eve's `X` and a party's `X`, with the
/// Gaussian mutual information it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalLeakage {
    pub correlation: f64,
    /// Bits; infinite when the correlation reaches one.
    pub info: f64,
}

impl ClassicalLeakage {
    fn from_moments(cross: f64, var_eve: f64, var_party: f64) -> Self {
        let denom = var_eve * var_party;
        let correlation = if denom > 0.0 { cross * cross / denom } else { 0.0 };
        let info = if correlation >= 1.0 {
            f64::INFINITY
        } else {
            0.5 * (1.0 / (1.0 - correlation)).log2()
        };
        Self { correlation, info }
    }
}

/// Moments of Alice's classical variable with the channel outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliceMoments {
    /// `<X_A²>`
    pub v_a: f64,
    /// `<X_A X_B>`
    pub x_a_x_b: f64,
    /// `<X_A X_E>`
    pub x_a_x_e: f64,
}

/// Global Gaussian state after the channel.
///
/// Mode 0 is Bob; modes 1.. are Eve's (her channel output, then the retained
/// cloner arm when the channel is noisy). Bob's trusted noise is kept apart from
/// the channel state and only enters his measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub cm: CovarianceMatrix,
    pub trusted_noise: f64,
    pub alice: AliceMoments,
}

pub const BOB: usize = 0;
pub const EVE: usize = 1;

impl JointState {
    pub fn eve_modes(&self) -> Vec<usize> {
        (1..self.cm.n_modes()).collect()
    }

    /// Eve's reduced state.
    pub fn eve_state(&self) -> Result<CovarianceMatrix> {
        self.cm.select_modes(&self.eve_modes())
    }

    /// Channel state with Bob's trusted noise added to his `X`.
    pub fn bob_detected(&self) -> Result<CovarianceMatrix> {
        self.cm.add_noise(BOB, Quadrature::X, self.trusted_noise)
    }

    /// Eve's state conditioned on Bob's noisy `X` outcome.
    pub fn eve_conditional_state(&self) -> Result<CovarianceMatrix> {
        condition_on_homodyne(&self.bob_detected()?, BOB, Quadrature::X)
    }

    fn bob_x_variance(&self) -> f64 {
        self.cm.moment(BOB, Quadrature::X, BOB, Quadrature::X) + self.trusted_noise
    }

    fn eve_x_variance(&self) -> f64 {
        self.cm.moment(EVE, Quadrature::X, EVE, Quadrature::X)
    }

    pub fn mutual_information_ab(&self) -> f64 {
        let a = self.alice;
        if a.v_a <= 0.0 {
            return 0.0;
        }
        let v_b = self.bob_x_variance();
        let conditional = v_b - a.x_a_x_b * a.x_a_x_b / a.v_a;
        (0.5 * (v_b / conditional).log2()).max(0.0)
    }

    pub fn holevo_eb(&self) -> Result<f64> {
        self.holevo_eb_with_tolerance(PHYSICAL_TOL)
    }

    fn holevo_eb_with_tolerance(&self, tol: f64) -> Result<f64> {
        let s_e = von_neumann_entropy_with_tolerance(&self.eve_state()?, tol)?;
        let s_e_b = von_neumann_entropy_with_tolerance(&self.eve_conditional_state()?, tol)?;
        clamp_holevo(s_e - s_e_b)
    }

    pub fn classical_leakage(&self, party: Party) -> ClassicalLeakage {
        let var_e = self.eve_x_variance();
        match party {
            Party::Bob => ClassicalLeakage::from_moments(
                self.cm.moment(EVE, Quadrature::X, BOB, Quadrature::X),
                var_e,
                self.bob_x_variance(),
            ),
            Party::Alice => ClassicalLeakage::from_moments(self.alice.x_a_x_e, var_e, self.alice.v_a),
        }
    }

    /// `S_E + S_B − S_EB` on the channel state (trusted noise excluded).
    pub fn quantum_mutual_information_eb(&self) -> Result<f64> {
        self.qmi_with_tolerance(PHYSICAL_TOL)
    }

    fn qmi_with_tolerance(&self, tol: f64) -> Result<f64> {
        let s_b = von_neumann_entropy_with_tolerance(&self.cm.select_modes(&[BOB])?, tol)?;
        let s_e = von_neumann_entropy_with_tolerance(&self.eve_state()?, tol)?;
        let s_be = von_neumann_entropy_with_tolerance(&self.cm, tol)?;
        Ok((s_e + s_b - s_be).max(0.0))
    }

    /// Report computed entirely from this state.
    pub fn report(&self, beta: f64) -> Result<SecurityReport> {
        self.report_with_tolerance(beta, PHYSICAL_TOL)
    }

    /// Like [`JointState::report`] but tolerating symplectic eigenvalues down to
    /// `1 - tol`, for matrices estimated from finite data.
    pub fn report_with_tolerance(&self, beta: f64, tol: f64) -> Result<SecurityReport> {
        let i_ab = self.mutual_information_ab();
        let chi_e = self.holevo_eb_with_tolerance(tol)?;
        let bob = self.classical_leakage(Party::Bob);
        let alice = self.classical_leakage(Party::Alice);
        Ok(SecurityReport {
            i_ab,
            chi_e,
            key_rate: beta * i_ab - chi_e,
            c_eb: bob.correlation,
            c_ea: alice.correlation,
            i_eb_classical: bob.info,
            i_ea_classical: alice.info,
            qmi_eb: self.qmi_with_tolerance(tol)?,
        })
    }
}

fn clamp_holevo(chi: f64) -> Result<f64> {
    if chi >= 0.0 {
        Ok(chi)
    } else if chi >= -HOLEVO_CLAMP_TOL {
        Ok(0.0)
    } else {
        Err(Error::NegativeHolevo { value: chi })
    }
}

fn require_lossy(p: &ProtocolParams) -> Result<()> {
    p.validate()?;
    if p.epsilon > 0.0 {
        return Err(Error::NoisyChannelUnsupported { epsilon: p.epsilon });
    }
    Ok(())
}

/// Variance of the cloner's injected mode for input-referred excess noise.
pub fn cloner_variance(eta: f64, epsilon: f64) -> Result<f64> {
    if epsilon == 0.0 {
        return Ok(1.0);
    }
    if eta >= 1.0 {
        return Err(Error::DegenerateCloner);
    }
    Ok(1.0 + eta * epsilon / (1.0 - eta))
}

/// Assembles the post-channel state of Bob and Eve.
///
/// A pure-loss channel mixes the source with vacuum; with excess noise the vacuum
/// is replaced by one arm of a two-mode squeezed thermal pair whose other arm Eve
/// retains (entangling cloner).
pub fn build_joint_state(p: &ProtocolParams) -> Result<JointState> {
    p.validate()?;
    let source = p.source_covariance()?;
    let before = if p.epsilon > 0.0 {
        source.direct_sum(&two_mode_squeezed(cloner_variance(p.eta, p.epsilon)?)?)
    } else {
        source.direct_sum(&CovarianceMatrix::vacuum(1))
    };
    // Environment port first so that Bob inherits the source slot with the
    // sign convention X_B = √η X_S − √(1−η) X_0.
    let cm = apply_beamsplitter(&before, 1, 0, p.eta)?;
    Ok(JointState {
        cm,
        trusted_noise: p.v_n,
        alice: AliceMoments {
            v_a: p.v_a,
            x_a_x_b: p.eta.sqrt() * p.v_a,
            x_a_x_e: (1.0 - p.eta).sqrt() * p.v_a,
        },
    })
}

/// Eve's single-mode state, closed form for a purely lossy channel.
pub fn eve_covariance(p: &ProtocolParams) -> Result<CovarianceMatrix> {
    require_lossy(p)?;
    let loss = 1.0 - p.eta;
    CovarianceMatrix::diagonal(&[
        p.eta + loss * p.signal_variance(),
        p.eta + loss * p.anti_squeezed_variance(),
    ])
}

/// Eve's state conditioned on Bob's `X` outcome, closed form for a purely lossy channel.
pub fn eve_conditional_covariance(p: &ProtocolParams) -> Result<CovarianceMatrix> {
    require_lossy(p)?;
    let loss = 1.0 - p.eta;
    let v = p.signal_variance();
    let x = (v + p.v_n * loss * v + p.eta * p.v_n) / (p.v_n + loss + p.eta * v);
    CovarianceMatrix::diagonal(&[x, p.eta + loss * p.anti_squeezed_variance()])
}

/// `<X_E X_B> = √(η(1−η)) (v_r + v_a − 1)` for a purely lossy channel.
pub fn eve_bob_cross_moment(p: &ProtocolParams) -> Result<f64> {
    require_lossy(p)?;
    Ok((p.eta * (1.0 - p.eta)).sqrt() * (p.signal_variance() - 1.0))
}

/// Holevo information between Eve and Bob's `X` outcome.
pub fn holevo_eb(p: &ProtocolParams) -> Result<f64> {
    p.validate()?;
    if p.epsilon > 0.0 {
        return build_joint_state(p)?.holevo_eb();
    }
    let s_e = single_mode_entropy(&eve_covariance(p)?)?;
    let s_e_b = single_mode_entropy(&eve_conditional_covariance(p)?)?;
    clamp_holevo(s_e - s_e_b)
}

fn single_mode_entropy(cm: &CovarianceMatrix) -> Result<f64> {
    entropy_g(cm.symplectic_eigenvalues()?[0])
}

/// Shannon mutual information between Alice's `X_A` and Bob's noisy `X_B`.
pub fn mutual_information_ab(p: &ProtocolParams) -> Result<f64> {
    p.validate()?;
    let noise = p.v_n + 1.0 - p.eta + p.eta * p.epsilon;
    let num = p.eta * p.v_a + p.eta * p.v_r + noise;
    let den = p.eta * p.v_r + noise;
    Ok(0.5 * (num / den).log2())
}

pub fn classical_leakage(p: &ProtocolParams, party: Party) -> Result<ClassicalLeakage> {
    p.validate()?;
    if p.epsilon > 0.0 {
        return Ok(build_joint_state(p)?.classical_leakage(party));
    }
    let var_e = p.eta + (1.0 - p.eta) * p.signal_variance();
    Ok(match party {
        Party::Bob => {
            let var_b = p.eta * p.signal_variance() + 1.0 - p.eta + p.v_n;
            ClassicalLeakage::from_moments(eve_bob_cross_moment(p)?, var_e, var_b)
        }
        Party::Alice => ClassicalLeakage::from_moments((1.0 - p.eta).sqrt() * p.v_a, var_e, p.v_a),
    })
}

pub fn quantum_mutual_information_eb(p: &ProtocolParams) -> Result<f64> {
    build_joint_state(p)?.quantum_mutual_information_eb()
}

/// `beta · I_AB − χ_E`; negative values mean no key.
pub fn key_rate_asymptotic(p: &ProtocolParams) -> Result<f64> {
    Ok(p.beta * mutual_information_ab(p)? - holevo_eb(p)?)
}

pub fn security_report(p: &ProtocolParams) -> Result<SecurityReport> {
    let i_ab = mutual_information_ab(p)?;
    let chi_e = holevo_eb(p)?;
    let bob = classical_leakage(p, Party::Bob)?;
    let alice = classical_leakage(p, Party::Alice)?;
    Ok(SecurityReport {
        i_ab,
        chi_e,
        key_rate: p.beta * i_ab - chi_e,
        c_eb: bob.correlation,
        c_ea: alice.correlation,
        i_eb_classical: bob.info,
        i_ea_classical: alice.info,
        qmi_eb: quantum_mutual_information_eb(p)?,
    })
}

/// Modulation variance that decouples Eve from Bob: `1 − v_r`.
pub fn decoupling_modulation(v_r: f64) -> Result<f64> {
    if !(v_r.is_finite() && v_r > 0.0) {
        return Err(invalid(format!("v_r must be positive, got {v_r}")));
    }
    if v_r > 1.0 {
        return Err(Error::NoDecouplingSolution { v_r });
    }
    Ok(1.0 - v_r)
}

/// Maximizes the asymptotic key rate over `v_a ∈ [lo, hi]`.
///
/// A 200-interval scan brackets the best point, then golden-section search
/// refines it to [`MODULATION_TOL`].
pub fn optimal_modulation(p: &ProtocolParams, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo) {
        return Err(invalid(format!("invalid modulation range [{lo}, {hi}]")));
    }
    let rate = |v_a: f64| -> Result<f64> {
        let r = key_rate_asymptotic(&p.with_v_a(v_a))?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(Error::NonFiniteRate { v_a })
        }
    };
    if hi - lo <= MODULATION_TOL {
        let mid = 0.5 * (lo + hi);
        return Ok((mid, rate(mid)?));
    }

    const SCAN: usize = 200;
    let step = (hi - lo) / SCAN as f64;
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..=SCAN {
        let r = rate(lo + step * k as f64)?;
        if r > best.1 {
            best = (k, r);
        }
    }
    let mut a = lo + step * best.0.saturating_sub(1) as f64;
    let mut b = (lo + step * (best.0 + 1) as f64).min(hi);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (rate(c)?, rate(d)?);
    while b - a > MODULATION_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rate(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = rate(d)?;
        }
    }
    let v_star = 0.5 * (a + b);
    let r_star = rate(v_star)?;
    // The scan point itself may beat the refined interior on a flat plateau.
    let grid_best = lo + step * best.0 as f64;
    if best.1 > r_star {
        Ok((grid_best, best.1))
    } else {
        Ok((v_star, r_star))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn diag(cm: &CovarianceMatrix) -> (f64, f64) {
        (cm.get(0, 0), cm.get(1, 1))
    }

    #[test]
    fn validation() {
        assert!(ProtocolParams::squeezed(0.5, 0.5, 0.5).validate().is_ok());
        assert!(ProtocolParams::squeezed(0.0, 0.5, 0.5).validate().is_err());
        assert!(ProtocolParams::squeezed(1.2, 0.5, 0.5).validate().is_err());
        assert!(ProtocolParams::squeezed(0.5, -0.1, 0.5).validate().is_err());
        assert!(ProtocolParams::squeezed(0.5, 0.5, 0.0).validate().is_err());
        assert!(ProtocolParams::squeezed(0.5, 0.5, 0.5)
            .with_beta(0.0)
            .validate()
            .is_err());
        assert!(ProtocolParams::squeezed(0.5, 0.5, 0.5)
            .with_v_n(f64::NAN)
            .validate()
            .is_err());
    }

    #[test]
    fn eve_covariance_examples() {
        let (x, p) = diag(&eve_covariance(&ProtocolParams::squeezed(0.5, 0.5, 0.5)).unwrap());
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 1.5, epsilon = 1e-15);

        let (x, p) = diag(&eve_covariance(&ProtocolParams::coherent(1.0, 0.58)).unwrap());
        assert_abs_diff_eq!(x, 1.42, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-15);

        let lossless = ProtocolParams::squeezed(0.2, 3.0, 1.0).with_delta_v(2.0);
        assert_eq!(diag(&eve_covariance(&lossless).unwrap()), (1.0, 1.0));

        let noisy = ProtocolParams::squeezed(0.5, 0.5, 0.5).with_epsilon(0.01);
        assert!(matches!(
            eve_covariance(&noisy),
            Err(Error::NoisyChannelUnsupported { .. })
        ));
    }

    #[test]
    fn eve_conditional_examples() {
        for eta in [0.01, 0.3, 0.9] {
            for v_n in [0.0, 0.4, 7.0] {
                let p = ProtocolParams::squeezed(0.5, 0.5, eta).with_v_n(v_n);
                let (x, _) = diag(&eve_conditional_covariance(&p).unwrap());
                assert_abs_diff_eq!(x, 1.0, epsilon = 1e-15);
            }
        }
        let (x, _) = diag(&eve_conditional_covariance(&ProtocolParams::coherent(1.0, 0.58)).unwrap());
        assert_abs_diff_eq!(x, 2.0 / 1.58, epsilon = 1e-15);

        // Infinite detector noise: conditioning stops helping.
        let p = ProtocolParams::squeezed(0.3, 2.0, 0.4).with_v_n(1e9);
        let (x, _) = diag(&eve_conditional_covariance(&p).unwrap());
        let (x_uncond, _) = diag(&eve_covariance(&p).unwrap());
        assert_abs_diff_eq!(x, x_uncond, epsilon = 1e-6);
    }

    #[test]
    fn holevo_examples() {
        // 50-digit oracle: g(sqrt(1.42)) − g(sqrt(2/1.58)).
        let chi = holevo_eb(&ProtocolParams::coherent(1.0, 0.58)).unwrap();
        assert_abs_diff_eq!(chi, 0.125_756_665_806_993_63, epsilon = 1e-13);
        assert_eq!(holevo_eb(&ProtocolParams::coherent(0.0, 0.4)).unwrap(), 0.0);
        let p = ProtocolParams::squeezed(0.3, 0.7, 0.2).with_delta_v(4.0).with_v_n(0.3);
        assert!(holevo_eb(&p).unwrap() <= 1e-9);
    }

    #[test]
    fn holevo_closed_form_matches_pipeline_for_coherent_example() {
        let p = ProtocolParams::coherent(1.0, 0.58);
        let pipeline = build_joint_state(&p).unwrap().holevo_eb().unwrap();
        assert_abs_diff_eq!(pipeline, holevo_eb(&p).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn mutual_information_examples() {
        assert_eq!(
            mutual_information_ab(&ProtocolParams::squeezed(0.5, 0.0, 0.5)).unwrap(),
            0.0
        );
        let i = mutual_information_ab(&ProtocolParams::squeezed(0.5, 0.5, 0.5)).unwrap();
        assert_abs_diff_eq!(i, 0.207_518_749_639_421_9, epsilon = 1e-14);
        let v_r = 1e-9;
        for eta in [0.25, 0.5, 0.75] {
            let i = mutual_information_ab(&ProtocolParams::squeezed(v_r, 1.0 - v_r, eta)).unwrap();
            assert_abs_diff_eq!(i, -0.5 * (1.0 - eta).log2(), epsilon = 1e-6);
        }
    }

    #[test]
    fn classical_leakage_examples() {
        let p = ProtocolParams::squeezed(0.4, 0.6, 0.3).with_v_n(0.2);
        let bob = classical_leakage(&p, Party::Bob).unwrap();
        assert_abs_diff_eq!(bob.correlation, 0.0, epsilon = 1e-30);
        assert_abs_diff_eq!(bob.info, 0.0, epsilon = 1e-15);
        let lossless = classical_leakage(&ProtocolParams::coherent(2.0, 1.0), Party::Alice).unwrap();
        assert_eq!((lossless.correlation, lossless.info), (0.0, 0.0));
        // Coherent, η = 0.5, V_A = 1: <X_E X_B> = 0.5, V_E = V_B = 1.5.
        let c = classical_leakage(&ProtocolParams::coherent(1.0, 0.5), Party::Bob).unwrap();
        assert_abs_diff_eq!(c.correlation, 0.25 / 2.25, epsilon = 1e-15);
        assert_abs_diff_eq!(c.info, 0.5 * (2.25f64 / 2.0).log2(), epsilon = 1e-15);
    }

    #[test]
    fn infinite_leakage_sentinel() {
        let c = ClassicalLeakage::from_moments(1.0, 1.0, 1.0);
        assert!(c.info.is_infinite());
    }

    #[test]
    fn joint_state_layout() {
        let p = ProtocolParams::squeezed(0.5, 0.7, 0.35).with_delta_v(0.5);
        let js = build_joint_state(&p).unwrap();
        assert_eq!(js.cm.n_modes(), 2);
        let analytic = eve_covariance(&p).unwrap();
        assert_abs_diff_eq!(js.eve_state().unwrap().get(0, 0), analytic.get(0, 0), epsilon = 1e-14);
        assert_abs_diff_eq!(js.alice.x_a_x_b, 0.35f64.sqrt() * 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(
            js.cm.moment(EVE, Quadrature::X, BOB, Quadrature::X),
            eve_bob_cross_moment(&p).unwrap(),
            epsilon = 1e-14
        );

        let noisy = ProtocolParams::squeezed(0.5, 0.5, 0.5).with_epsilon(0.035);
        let js = build_joint_state(&noisy).unwrap();
        assert_eq!(js.cm.n_modes(), 3);
        assert_abs_diff_eq!(js.cm.get(0, 0), 0.5 * 1.0 + 0.5 + 0.5 * 0.035, epsilon = 1e-14);
        assert!(js.cm.is_physical(PHYSICAL_TOL));

        let degenerate = ProtocolParams::squeezed(0.5, 0.5, 1.0).with_epsilon(0.035);
        assert!(matches!(build_joint_state(&degenerate), Err(Error::DegenerateCloner)));
    }

    #[test]
    fn quantum_mutual_information_examples() {
        for eta in [0.1, 0.5, 1.0] {
            let q = quantum_mutual_information_eb(&ProtocolParams::coherent(0.0, eta)).unwrap();
            assert_abs_diff_eq!(q, 0.0, epsilon = 1e-9);
        }
        let p = ProtocolParams::squeezed(0.5, 0.5, 0.5);
        assert!(quantum_mutual_information_eb(&p).unwrap() > 1e-3);
        assert!(holevo_eb(&p).unwrap() <= 1e-12);
        let q = quantum_mutual_information_eb(&ProtocolParams::squeezed(0.3, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn key_rate_examples() {
        let p = ProtocolParams::squeezed(0.5, 0.5, 0.5).with_beta(0.01);
        let r = key_rate_asymptotic(&p).unwrap();
        assert_abs_diff_eq!(r, 0.01 * 0.207_518_749_639_421_9, epsilon = 1e-14);
        assert!(r > 0.0);
        let v_r = 1e-9;
        let limit = key_rate_asymptotic(&ProtocolParams::squeezed(v_r, 1.0 - v_r, 0.75)).unwrap();
        assert_abs_diff_eq!(limit, 1.0, epsilon = 1e-4);
        for v_r in [0.2, 1.0] {
            assert!(key_rate_asymptotic(&ProtocolParams::squeezed(v_r, 0.0, 0.6)).unwrap() <= 0.0);
        }
    }

    #[test]
    fn decoupling_modulation_examples() {
        assert_eq!(decoupling_modulation(0.5).unwrap(), 0.5);
        assert_eq!(decoupling_modulation(1.0).unwrap(), 0.0);
        assert_eq!(decoupling_modulation(0.25).unwrap(), 0.75);
        assert!(matches!(
            decoupling_modulation(1.5),
            Err(Error::NoDecouplingSolution { .. })
        ));
        assert!(decoupling_modulation(0.0).is_err());
    }

    #[test]
    fn optimal_modulation_examples() {
        let p = ProtocolParams::squeezed(0.5, 0.0, 0.5).with_beta(1e-4);
        let (v, _) = optimal_modulation(&p, 0.0, 10.0).unwrap();
        assert!((v - 0.5).abs() < 1e-3, "v_a* = {v}");

        let (v, r) = optimal_modulation(&p, 0.5, 0.5).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(r, key_rate_asymptotic(&p.with_v_a(0.5)).unwrap());

        assert!(optimal_modulation(&p, 1.0, 0.5).is_err());
        assert!(optimal_modulation(&p, -1.0, 0.5).is_err());
    }

    #[test]
    fn optimal_modulation_matches_dense_scan() {
        let p = ProtocolParams::squeezed(0.5, 0.0, 0.5);
        let (v, r) = optimal_modulation(&p, 0.0, 10.0).unwrap();
        let (mut best_v, mut best_r) = (0.0, f64::NEG_INFINITY);
        for k in 0..=100_000 {
            let va = k as f64 * 1e-4;
            let rr = key_rate_asymptotic(&p.with_v_a(va)).unwrap();
            if rr > best_r {
                best_v = va;
                best_r = rr;
            }
        }
        assert!(v > 0.5);
        assert!((v - best_v).abs() < 2e-4, "golden {v} vs scan {best_v}");
        assert!(r >= best_r - 1e-12);
    }

    fn lossy_params() -> impl Strategy<Value = ProtocolParams> {
        (
            0.01f64..0.999,
            0.01f64..1.0,
            0.0f64..10.0,
            0.0f64..5.0,
            0.0f64..3.0,
            0.01f64..1.0,
        )
            .prop_map(|(eta, v_r, v_a, delta_v, v_n, beta)| ProtocolParams {
                v_r,
                delta_v,
                v_a,
                eta,
                epsilon: 0.0,
                v_n,
                beta,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn decoupling_identity(p in lossy_params()) {
            let p = p.with_v_a(1.0 - p.v_r);
            prop_assert!(holevo_eb(&p).unwrap() <= 1e-9);
            let bob = classical_leakage(&p, Party::Bob).unwrap();
            prop_assert!(bob.correlation <= 1e-9 && bob.info <= 1e-9);
        }

        #[test]
        fn report_invariants(p in lossy_params()) {
            let r = security_report(&p).unwrap();
            prop_assert!(r.chi_e >= 0.0 && r.i_ab >= 0.0);
            prop_assert!(r.c_eb >= 0.0 && r.c_eb < 1.0);
            prop_assert!(r.qmi_eb >= r.chi_e - 1e-9);
            prop_assert!(r.chi_e >= r.i_eb_classical - 1e-9);
            prop_assert!((r.key_rate - (p.beta * r.i_ab - r.chi_e)).abs() < 1e-15);
        }

        #[test]
        fn i_ab_increasing_in_modulation(p in lossy_params(), dv in 1e-3f64..5.0) {
            let lo = mutual_information_ab(&p).unwrap();
            let hi = mutual_information_ab(&p.with_v_a(p.v_a + dv)).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn holevo_v_shape(p in lossy_params(), d1 in 0.01f64..0.5, extra in 0.01f64..0.5) {
            // χ grows with |v_r + v_a − 1| on both sides of the decoupling point.
            let center = 1.0 - p.v_r;
            let above = |d: f64| holevo_eb(&p.with_v_a(center + d)).unwrap();
            prop_assert!(above(d1 + extra) > above(d1));
            if center - d1 - extra >= 0.0 {
                let below = |d: f64| holevo_eb(&p.with_v_a(center - d)).unwrap();
                prop_assert!(below(d1 + extra) > below(d1));
            }
        }

        #[test]
        fn optimum_at_or_above_decoupling(p in lossy_params()) {
            let p = p.with_beta(p.beta.min(0.99));
            let (v, _) = optimal_modulation(&p, 0.0, 5.0).unwrap();
            prop_assert!(v >= 1.0 - p.v_r - 1e-5, "v_a* = {} for {:?}", v, p);
        }
    }
}
