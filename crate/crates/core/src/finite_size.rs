//! Finite-size penalty and the reconciliation-efficiency threshold above which a
//! key can be extracted.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::format::fmt_sig;
use crate::gaussian::snu_to_db;
use crate::protocol::{holevo_eb, mutual_information_ab, ProtocolParams};

pub const DEFAULT_EPS: f64 = 1e-10;

/// Block sizes and failure probabilities of a finite key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeParams {
    /// Samples used for the key.
    pub n_key: f64,
    /// Signals exchanged in total.
    pub n_total: f64,
    /// Smoothing parameter.
    pub eps_smooth: f64,
    /// Privacy-amplification failure probability.
    pub eps_pa: f64,
}

impl FiniteSizeParams {
    /// Half of `n_total` used for the key, both failure probabilities at 1e-10.
    pub fn with_total(n_total: f64) -> Self {
        Self {
            n_key: n_total / 2.0,
            n_total,
            eps_smooth: DEFAULT_EPS,
            eps_pa: DEFAULT_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_key.is_finite() && self.n_total.is_finite()) {
            return Err(invalid("sample counts must be finite"));
        }
        if !(self.n_key > 0.0 && self.n_key <= self.n_total) {
            return Err(invalid(format!(
                "need 0 < n_key <= n_total, got n_key = {}, n_total = {}",
                self.n_key, self.n_total
            )));
        }
        for (name, v) in [("eps_smooth", self.eps_smooth), ("eps_pa", self.eps_pa)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// `Δ(n) = 7·sqrt(log2(2/ε̄)/n) + (2/n)·log2(1/ε_PA)` in bits per symbol.
pub fn delta_correction(fp: &FiniteSizeParams) -> Result<f64> {
    fp.validate()?;
    let n = fp.n_key;
    Ok(7.0 * ((2.0 / fp.eps_smooth).log2() / n).sqrt() + 2.0 / n * (1.0 / fp.eps_pa).log2())
}

/// `(n/N)·(β·I_AB − χ_E − Δ)`.
pub fn key_rate_finite(p: &ProtocolParams, fp: &FiniteSizeParams) -> Result<f64> {
    let delta = delta_correction(fp)?;
    let asymptotic = p.beta * mutual_information_ab(p)? - holevo_eb(p)?;
    Ok(fp.n_key / fp.n_total * (asymptotic - delta))
}

/// Minimum reconciliation efficiency for a positive key rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaThreshold {
    /// Unclipped `β*`; may exceed one.
    pub beta_star: f64,
    /// Whether some `β ≤ 1` beats the threshold.
    pub secure: bool,
}

impl BetaThreshold {
    fn from_value(beta_star: f64) -> Self {
        Self {
            beta_star,
            secure: beta_star < 1.0,
        }
    }

    fn undefined() -> Self {
        Self {
            beta_star: f64::INFINITY,
            secure: false,
        }
    }
}

/// `β* = (χ_E + Δ)/I_AB`, with `Δ = 0` in the asymptotic case.
/// `p.beta` is ignored.
pub fn beta_threshold(p: &ProtocolParams, fp: Option<&FiniteSizeParams>) -> Result<BetaThreshold> {
    let i_ab = mutual_information_ab(p)?;
    if i_ab <= 0.0 {
        return Err(Error::UndefinedThreshold);
    }
    let delta = match fp {
        Some(fp) => delta_correction(fp)?,
        None => 0.0,
    };
    Ok(BetaThreshold::from_value((holevo_eb(p)? + delta) / i_ab))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub v_a: f64,
    pub threshold: BetaThreshold,
}

/// β-threshold curve over a modulation grid; the secure region lies above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityCurve {
    pub points: Vec<RegionPoint>,
}

impl SecurityCurve {
    /// True when every point secure in `other` is secure here with a threshold at
    /// least as low.
    pub fn contains(&self, other: &SecurityCurve) -> bool {
        self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| {
                a.v_a == b.v_a
                    && (!b.threshold.secure || (a.threshold.secure && a.threshold.beta_star <= b.threshold.beta_star))
            })
    }

    /// [`SecurityCurve::contains`] plus at least one extra secure point or a
    /// strictly lower threshold somewhere inside the region.
    pub fn strictly_contains(&self, other: &SecurityCurve) -> bool {
        self.contains(other)
            && self.points.iter().zip(&other.points).any(|(a, b)| {
                a.threshold.secure && (!b.threshold.secure || a.threshold.beta_star < b.threshold.beta_star)
            })
    }

    /// CSV columns `v_a_snu,v_a_db,beta_star,secure_flag`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "v_a_snu,v_a_db,beta_star,secure_flag")?;
        for pt in &self.points {
            let db = snu_to_db(pt.v_a).map(|d| d.value()).unwrap_or(f64::NEG_INFINITY);
            writeln!(
                out,
                "{},{},{},{}",
                fmt_sig(pt.v_a),
                fmt_sig(db),
                fmt_sig(pt.threshold.beta_star),
                u8::from(pt.threshold.secure)
            )?;
        }
        Ok(())
    }
}

/// Evaluates [`beta_threshold`] at each `v_a` in `grid`, in input order. Points
/// with no mutual information are marked insecure at any `β`.
pub fn security_region(
    p_base: &ProtocolParams,
    v_a_grid: &[f64],
    fp: Option<&FiniteSizeParams>,
) -> Result<SecurityCurve> {
    use rayon::prelude::*;

    if v_a_grid.is_empty() {
        return Err(invalid("modulation grid is empty"));
    }
    let points = v_a_grid
        .par_iter()
        .map(|&v_a| {
            let threshold = match beta_threshold(&p_base.with_v_a(v_a), fp) {
                Ok(t) => t,
                Err(Error::UndefinedThreshold) => BetaThreshold::undefined(),
                Err(e) => return Err(e),
            };
            Ok(RegionPoint { v_a, threshold })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SecurityCurve { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::key_rate_asymptotic;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn delta_examples() {
        let fp = |n: f64| FiniteSizeParams {
            n_key: n,
            n_total: n,
            eps_smooth: DEFAULT_EPS,
            eps_pa: DEFAULT_EPS,
        };
        assert!(delta_correction(&fp(1e18)).unwrap() < 1e-7);
        // 50-digit mpmath evaluation.
        assert_abs_diff_eq!(
            delta_correction(&fp(1e10)).unwrap(),
            4.094_873_841_230_315_7e-4,
            epsilon = 1e-17
        );
        let halved = FiniteSizeParams {
            eps_smooth: DEFAULT_EPS / 2.0,
            ..fp(1e10)
        };
        assert!(delta_correction(&halved).unwrap() > delta_correction(&fp(1e10)).unwrap());
        assert_abs_diff_eq!(
            delta_correction(&FiniteSizeParams::with_total(1e10)).unwrap(),
            5.791_065_041_283_22e-4,
            epsilon = 1e-17
        );
    }

    #[test]
    fn validation() {
        let ok = FiniteSizeParams::with_total(1e6);
        assert!(ok.validate().is_ok());
        assert!(FiniteSizeParams { n_key: 2e6, ..ok }.validate().is_err());
        assert!(FiniteSizeParams { n_key: 0.0, ..ok }.validate().is_err());
        assert!(FiniteSizeParams { eps_pa: 1.0, ..ok }.validate().is_err());
        assert!(FiniteSizeParams { eps_smooth: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn finite_rate_reduces_to_asymptotic() {
        let p = ProtocolParams::squeezed(0.5, 1.2, 0.4).with_beta(0.9);
        let fp = FiniteSizeParams {
            n_key: 1e300,
            n_total: 1e300,
            eps_smooth: 0.5,
            eps_pa: 0.5,
        };
        assert_abs_diff_eq!(
            key_rate_finite(&p, &fp).unwrap(),
            key_rate_asymptotic(&p).unwrap(),
            epsilon = 1e-12
        );
        let tiny = FiniteSizeParams {
            n_key: 1.0,
            n_total: 1.0,
            ..FiniteSizeParams::with_total(1.0)
        };
        assert!(key_rate_finite(&p, &tiny).unwrap() < -1.0);
    }

    #[test]
    fn threshold_examples() {
        let decoupled = ProtocolParams::squeezed(0.5, 0.5, 0.001);
        assert_eq!(beta_threshold(&decoupled, None).unwrap().beta_star, 0.0);
        let coherent = ProtocolParams::coherent(0.7, 0.001);
        assert!(beta_threshold(&coherent, None).unwrap().beta_star > 0.0);
        assert!(matches!(
            beta_threshold(&ProtocolParams::coherent(0.0, 0.5), None),
            Err(Error::UndefinedThreshold)
        ));
        // Tiny modulation on a squeezed source: χ_E dwarfs I_AB.
        let t = beta_threshold(&ProtocolParams::squeezed(0.5, 1e-4, 0.5), None).unwrap();
        assert!(t.beta_star > 1.0 && !t.secure);
    }

    #[test]
    fn region_examples() {
        let base = ProtocolParams::squeezed(0.5, 0.0, 0.001);
        let curve = security_region(&base, &[0.0, 0.25, 0.5, 1.0], None).unwrap();
        assert_eq!(curve.points.len(), 4);
        assert!(!curve.points[0].threshold.secure);
        assert!(curve.points[0].threshold.beta_star.is_infinite());
        assert_eq!(curve.points[2].threshold.beta_star, 0.0);
        let single = security_region(&base, &[0.5], None).unwrap();
        assert_eq!(single.points.len(), 1);
        assert!(security_region(&base, &[], None).is_err());

        let mut csv = Vec::new();
        curve.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("v_a_snu,v_a_db,beta_star,secure_flag"));
        assert_eq!(lines.next(), Some("0,-inf,inf,0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn delta_decreasing(n in 10.0f64..1e15, factor in 1.01f64..100.0) {
            let a = FiniteSizeParams { n_key: n, n_total: n * factor, ..FiniteSizeParams::with_total(1.0) };
            let b = FiniteSizeParams { n_key: n * factor, n_total: n * factor, ..a };
            prop_assert!(delta_correction(&b).unwrap() < delta_correction(&a).unwrap());
        }

        #[test]
        fn threshold_is_sign_change(
            eta in 0.01f64..0.99, v_r in 0.05f64..1.0, v_a in 0.01f64..5.0,
            v_n in 0.0f64..1.0, finite in any::<bool>(), n in 1e6f64..1e12
        ) {
            let p = ProtocolParams::squeezed(v_r, v_a, eta).with_v_n(v_n);
            let fp = FiniteSizeParams::with_total(n);
            let fp = finite.then_some(&fp);
            let t = beta_threshold(&p, fp).unwrap();
            prop_assume!(t.beta_star > 1e-6 && t.beta_star < 1.0 - 1e-6);
            let rate = |beta: f64| {
                let q = p.with_beta(beta);
                match fp {
                    Some(fp) => key_rate_finite(&q, fp).unwrap(),
                    None => key_rate_asymptotic(&q).unwrap(),
                }
            };
            prop_assert!(rate(t.beta_star + 1e-9) > 0.0);
            prop_assert!(rate(t.beta_star - 1e-9) < 0.0);
        }

        #[test]
        fn finite_region_nested(eta in 0.001f64..0.9, v_r in 0.1f64..1.0, eps in prop_oneof![Just(0.0), 0.0f64..0.05]) {
            let base = ProtocolParams::squeezed(v_r, 0.0, eta).with_epsilon(eps);
            let grid: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
            let asym = security_region(&base, &grid, None).unwrap();
            let n11 = security_region(&base, &grid, Some(&FiniteSizeParams::with_total(1e11))).unwrap();
            let n10 = security_region(&base, &grid, Some(&FiniteSizeParams::with_total(1e10))).unwrap();
            prop_assert!(asym.contains(&n11));
            prop_assert!(n11.contains(&n10));
        }
    }
}
