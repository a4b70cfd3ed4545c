use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian::CovarianceMatrix;

use super::{SampleBatch, CHUNK_LEN, COLUMNS};

/// Position of each sample column in the `(A, B, E)` covariance matrix.
/// Index 1 (Alice's `P`) has no data behind it.
pub(crate) const COLUMN_INDEX: [usize; 5] = [0, 2, 3, 4, 5];
pub(crate) const ALICE_P: usize = 1;

/// Estimated 6×6 covariance of `(A, B, E)` with entry-wise standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedCM {
    #[serde(rename = "matrix")]
    pub cm: CovarianceMatrix,
    pub n_samples: usize,
    pub standard_errors: Vec<Vec<f64>>,
}

impl ReconstructedCM {
    /// Wraps a known matrix as a noiseless "reconstruction".
    pub fn exact(cm: CovarianceMatrix) -> Self {
        let dim = cm.dim();
        Self {
            cm,
            n_samples: usize::MAX,
            standard_errors: vec![vec![0.0; dim]; dim],
        }
    }

    /// Number of standard errors separating each entry from `reference`.
    /// Entries with zero standard error count as 0 when equal, infinite otherwise.
    pub fn sigma_distances(&self, reference: &CovarianceMatrix) -> Vec<Vec<f64>> {
        let dim = self.cm.dim();
        (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| {
                        let diff = (self.cm.get(i, j) - reference.get(i, j)).abs();
                        let se = self.standard_errors[i][j];
                        if se > 0.0 {
                            diff / se
                        } else if diff == 0.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Zero-mean moment estimator over the batch.
///
/// `Σ xᵢxⱼ / n` per pair (no mean subtraction, so dividing by `n` keeps it
/// unbiased), Alice's `P` row filled with the configured placeholder variance.
/// Standard errors use the Gaussian fourth-moment identity
/// `Var(xᵢxⱼ) = σᵢᵢσⱼⱼ + σᵢⱼ²`.
pub fn reconstruct_covariance(batch: &SampleBatch) -> Result<ReconstructedCM> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::InsufficientData { n });
    }
    let partials: Vec<[[f64; 5]; 5]> = batch
        .samples
        .par_chunks(CHUNK_LEN)
        .map(|chunk| {
            let mut acc = [[0.0; 5]; 5];
            for s in chunk {
                let v = s.as_array();
                for i in 0..5 {
                    for j in i..5 {
                        acc[i][j] += v[i] * v[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut sums = [[0.0; 5]; 5];
    for part in &partials {
        for i in 0..5 {
            for j in i..5 {
                sums[i][j] += part[i][j];
            }
        }
    }

    let nf = n as f64;
    let mut moments = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in i..5 {
            moments[i][j] = sums[i][j] / nf;
            moments[j][i] = moments[i][j];
        }
    }
    for (k, name) in COLUMNS.iter().enumerate() {
        if moments[k][k] <= 0.0 {
            return Err(invalid(format!(
                "column {name} has zero variance; reconstructed state is unphysical"
            )));
        }
    }

    let mut entries = DMatrix::zeros(6, 6);
    let mut errors = vec![vec![0.0; 6]; 6];
    for i in 0..5 {
        for j in 0..5 {
            let (a, b) = (COLUMN_INDEX[i], COLUMN_INDEX[j]);
            entries[(a, b)] = moments[i][j];
            errors[a][b] = ((moments[i][i] * moments[j][j] + moments[i][j] * moments[i][j]) / nf).sqrt();
        }
    }
    entries[(ALICE_P, ALICE_P)] = batch.config.alice_p_placeholder;

    Ok(ReconstructedCM {
        cm: CovarianceMatrix::new(entries)?,
        n_samples: n,
        standard_errors: errors,
    })
}
