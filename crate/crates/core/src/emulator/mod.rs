//! Monte-Carlo emulation of the measurement chain.
//!
//! Samples are drawn through the channel relations
//!
//! ```text
//! X_B = √η (X_A + X_R) − √(1−η) X_0        X_E = √(1−η) (X_A + X_R) + √η X_0
//! P_B = √η P_R − √(1−η) P_0                P_E = √(1−η) P_R + √η P_0
//! ```
//!
//! followed by detector inefficiency (a beamsplitter with vacuum) and, on Bob's
//! `X`, trusted electronic noise. With excess noise the environment quadratures
//! are thermal with the cloner variance instead of vacuum.
//!
//! Random numbers come from ChaCha8 with one stream per [`CHUNK_LEN`] samples
//! and Ziggurat normals, so a seed fixes the batch bit for bit regardless of
//! how many worker threads run.

mod analysis;
mod reconstruct;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::format::fmt_sig;
use crate::protocol::{cloner_variance, ProtocolParams};

pub use analysis::{expected_covariance, security_estimate, security_from_data, SecurityEstimate, DATA_PHYSICAL_TOL};
pub use reconstruct::{reconstruct_covariance, ReconstructedCM};

/// Samples per independent random stream.
pub const CHUNK_LEN: usize = 1 << 16;

/// Seed offset for the shot-noise calibration run that accompanies a batch.
pub const CALIBRATION_SEED_OFFSET: u64 = 0x5eed_ca11_b4a7_0000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmulationConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Bob's homodyne efficiency.
    pub eta_bob_det: f64,
    /// Eve's homodyne efficiency.
    pub eta_eve_det: f64,
    /// Diagonal variance put in Alice's unmodulated `P` row of the reconstruction.
    pub alice_p_placeholder: f64,
    /// When false, both detectors are ideal regardless of the efficiencies above.
    pub detector_imperfections: bool,
}

impl Default for EmulationConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            seed: 42,
            eta_bob_det: 0.85,
            eta_eve_det: 0.95,
            alice_p_placeholder: 100.0,
            detector_imperfections: true,
        }
    }
}

impl EmulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(invalid(format!("need at least 2 samples, got {}", self.n_samples)));
        }
        for (name, v) in [("eta_bob_det", self.eta_bob_det), ("eta_eve_det", self.eta_eve_det)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.alice_p_placeholder > 0.0 && self.alice_p_placeholder.is_finite()) {
            return Err(invalid(format!(
                "alice_p_placeholder must be positive, got {}",
                self.alice_p_placeholder
            )));
        }
        Ok(())
    }

    /// Detector efficiencies actually applied, `(bob, eve)`.
    pub fn effective_efficiencies(&self) -> (f64, f64) {
        if self.detector_imperfections {
            (self.eta_bob_det, self.eta_eve_det)
        } else {
            (1.0, 1.0)
        }
    }
}

/// One joint measurement record in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub x_a: f64,
    pub x_b: f64,
    pub p_b: f64,
    pub x_e: f64,
    pub p_e: f64,
}

impl QuadratureSample {
    pub(crate) fn as_array(&self) -> [f64; 5] {
        [self.x_a, self.x_b, self.p_b, self.x_e, self.p_e]
    }
}

pub const COLUMNS: [&str; 5] = ["x_a", "x_b", "p_b", "x_e", "p_e"];

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub samples: Vec<QuadratureSample>,
    pub params: ProtocolParams,
    pub config: EmulationConfig,
}

impl SampleBatch {
    /// Wraps externally produced records.
    pub fn from_samples(
        samples: Vec<QuadratureSample>,
        params: ProtocolParams,
        config: EmulationConfig,
    ) -> Result<Self> {
        if samples.iter().any(|s| s.as_array().iter().any(|v| !v.is_finite())) {
            return Err(invalid("sample batch contains non-finite values"));
        }
        let config = EmulationConfig {
            n_samples: samples.len(),
            ..config
        };
        Ok(Self {
            samples,
            params,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Zero-mean second moments `Σx²/n` of the five columns.
    pub fn column_variances(&self) -> [f64; 5] {
        let n = self.samples.len().max(1) as f64;
        let sums = self
            .samples
            .par_chunks(CHUNK_LEN)
            .map(|chunk| {
                let mut acc = [0.0; 5];
                for s in chunk {
                    for (a, v) in acc.iter_mut().zip(s.as_array()) {
                        *a += v * v;
                    }
                }
                acc
            })
            .collect::<Vec<_>>();
        let mut total = [0.0; 5];
        for part in sums {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        total.map(|t| t / n)
    }

    /// CSV with header `x_a,x_b,p_b,x_e,p_e`, one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", COLUMNS.join(","))?;
        for s in &self.samples {
            let row: Vec<String> = s.as_array().iter().map(|&v| fmt_sig(v)).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws `cfg.n_samples` records for protocol `p`.
pub fn generate_samples(p: &ProtocolParams, cfg: &EmulationConfig) -> Result<SampleBatch> {
    p.validate()?;
    cfg.validate()?;
    let env_var = cloner_variance(p.eta, p.epsilon)?;
    let (eta_b, eta_e) = cfg.effective_efficiencies();

    let sd_a = p.v_a.sqrt();
    let sd_r = p.v_r.sqrt();
    let sd_pr = p.anti_squeezed_variance().sqrt();
    let sd_env = env_var.sqrt();
    let sd_n = p.v_n.sqrt();
    let (t, r) = (p.eta.sqrt(), (1.0 - p.eta).sqrt());
    let (tb, rb) = (eta_b.sqrt(), (1.0 - eta_b).sqrt());
    let (te, re) = (eta_e.sqrt(), (1.0 - eta_e).sqrt());

    let n = cfg.n_samples;
    let n_chunks = n.div_ceil(CHUNK_LEN);
    let chunks: Vec<Vec<QuadratureSample>> = (0..n_chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let len = CHUNK_LEN.min(n - k * CHUNK_LEN);
            let mut normal = move || -> f64 { rng.sample(StandardNormal) };
            (0..len)
                .map(|_| {
                    let x_a = sd_a * normal();
                    let x_r = sd_r * normal();
                    let p_r = sd_pr * normal();
                    let x_0 = sd_env * normal();
                    let p_0 = sd_env * normal();
                    let x_s = x_a + x_r;
                    let (x_b, x_e) = (t * x_s - r * x_0, r * x_s + t * x_0);
                    let (p_b, p_e) = (t * p_r - r * p_0, r * p_r + t * p_0);
                    QuadratureSample {
                        x_a,
                        x_b: tb * x_b + rb * normal() + sd_n * normal(),
                        p_b: tb * p_b + rb * normal(),
                        x_e: te * x_e + re * normal(),
                        p_e: te * p_e + re * normal(),
                    }
                })
                .collect()
        })
        .collect();

    Ok(SampleBatch {
        samples: chunks.into_iter().flatten().collect(),
        params: *p,
        config: *cfg,
    })
}

/// Vacuum run at the same detector settings: no modulation, no squeezing, no
/// channel or electronic noise.
pub fn vacuum_calibration(p: &ProtocolParams, cfg: &EmulationConfig) -> Result<SampleBatch> {
    let vacuum = ProtocolParams {
        v_r: 1.0,
        delta_v: 0.0,
        v_a: 0.0,
        epsilon: 0.0,
        v_n: 0.0,
        ..*p
    };
    let cfg = EmulationConfig {
        seed: cfg.seed.wrapping_add(CALIBRATION_SEED_OFFSET),
        ..*cfg
    };
    generate_samples(&vacuum, &cfg)
}

/// Rescales Bob's and Eve's quadratures so that the calibration run has unit
/// variance. Alice's column is left untouched.
pub fn normalize_to_shot_noise(batch: &SampleBatch, vacuum_calibration: &SampleBatch) -> Result<SampleBatch> {
    let var = vacuum_calibration.column_variances();
    let mut scale = [1.0; 5];
    for k in 1..5 {
        if !(var[k] > 0.0 && var[k].is_finite()) {
            return Err(invalid(format!(
                "calibration variance of {} is {}, cannot normalize",
                COLUMNS[k], var[k]
            )));
        }
        scale[k] = 1.0 / var[k].sqrt();
    }
    let samples = batch
        .samples
        .iter()
        .map(|s| QuadratureSample {
            x_a: s.x_a,
            x_b: s.x_b * scale[1],
            p_b: s.p_b * scale[2],
            x_e: s.x_e * scale[3],
            p_e: s.p_e * scale[4],
        })
        .collect();
    Ok(SampleBatch {
        samples,
        params: batch.params,
        config: batch.config,
    })
}
