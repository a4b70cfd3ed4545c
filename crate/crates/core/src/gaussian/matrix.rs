use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// Symmetry tolerance, scaled by `max(1, |entry|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Slack allowed below the vacuum bound before a state counts as unphysical.
pub const PHYSICAL_TOL: f64 = 1e-9;

/// One of the two canonical quadratures of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    pub(crate) fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }

    /// Row/column of this quadrature of `mode` in an `(X1, P1, X2, P2, ...)` ordered matrix.
    pub fn index(self, mode: usize) -> usize {
        2 * mode + self.offset()
    }
}

/// Second-moment matrix of a zero-mean Gaussian state in shot-noise units.
///
/// Rows and columns follow the ordering `(X1, P1, X2, P2, ...)`; the vacuum
/// is the identity. Construction checks shape, finiteness and symmetry but not
/// physicality, so that measured or hand-written matrices can be inspected
/// with [`CovarianceMatrix::symplectic_eigenvalues`] before they are trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(invalid(format!("covariance matrix must be square, got {rows}x{cols}")));
        }
        if rows == 0 || rows % 2 != 0 {
            return Err(invalid(format!(
                "covariance matrix dimension must be even and positive, got {rows}"
            )));
        }
        if let Some(v) = entries.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("covariance matrix contains non-finite entry {v}")));
        }
        for i in 0..rows {
            for j in (i + 1)..rows {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                let scale = 1f64.max(a.abs()).max(b.abs());
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(invalid(format!(
                        "covariance matrix is not symmetric: entry ({i},{j}) = {a} but ({j},{i}) = {b}"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Builds a matrix from rows, e.g. parsed JSON.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(invalid(format!(
                "ragged matrix: row of length {} in a {n}-row matrix",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self {
            entries: DMatrix::identity(2 * n_modes, 2 * n_modes),
        }
    }

    /// Symmetrizes the argument instead of rejecting small asymmetries.
    /// Used for results of congruence transforms, which are symmetric up to rounding.
    pub(crate) fn from_symmetrized(m: DMatrix<f64>) -> Self {
        let entries = (&m + m.transpose()) * 0.5;
        Self { entries }
    }

    pub fn n_modes(&self) -> usize {
        self.entries.nrows() / 2
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[(row, col)]
    }

    /// Second moment between quadrature `qa` of `mode_a` and `qb` of `mode_b`.
    pub fn moment(&self, mode_a: usize, qa: Quadrature, mode_b: usize, qb: Quadrature) -> f64 {
        self.entries[(qa.index(mode_a), qb.index(mode_b))]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Adds `amount` to the variance of one quadrature (classical Gaussian noise).
    pub fn add_noise(&self, mode: usize, quadrature: Quadrature, amount: f64) -> Result<Self> {
        self.check_mode(mode)?;
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(invalid(format!(
                "added noise must be finite and non-negative, got {amount}"
            )));
        }
        let mut entries = self.entries.clone();
        let k = quadrature.index(mode);
        entries[(k, k)] += amount;
        Ok(Self { entries })
    }

    /// Tensor product with an uncorrelated state.
    pub fn direct_sum(&self, other: &CovarianceMatrix) -> Self {
        let (a, b) = (self.dim(), other.dim());
        let mut entries = DMatrix::zeros(a + b, a + b);
        entries.view_mut((0, 0), (a, a)).copy_from(&self.entries);
        entries.view_mut((a, a), (b, b)).copy_from(&other.entries);
        Self { entries }
    }

    /// Reduced state of the listed modes, in the listed order.
    pub fn select_modes(&self, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("cannot select an empty set of modes"));
        }
        for (k, &m) in modes.iter().enumerate() {
            self.check_mode(m)?;
            if modes[..k].contains(&m) {
                return Err(invalid(format!("mode {m} selected twice")));
            }
        }
        let idx: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let entries = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.entries[(idx[i], idx[j])]);
        Ok(Self { entries })
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(invalid(format!(
                "mode index {mode} out of range for a {}-mode state",
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// Symplectic spectrum, sorted descending. One value per mode.
    ///
    /// A single mode uses `sqrt(det)` directly. Larger states diagonalize the
    /// Hermitian matrix `i·γ^{1/2} Ω γ^{1/2}`, whose spectrum is `±ν_k`; this
    /// keeps the absolute error at `ε·‖γ‖` rather than squaring the scale.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        if self.n_modes() == 1 {
            let det = self.entries[(0, 0)] * self.entries[(1, 1)] - self.entries[(0, 1)] * self.entries[(1, 0)];
            if det <= 0.0 {
                return Err(Error::SingularPairing {
                    detail: format!("single-mode determinant {det} is not positive"),
                    condition: f64::INFINITY,
                });
            }
            return Ok(vec![det.sqrt()]);
        }

        let dim = self.dim();
        let eig = self.entries.clone().symmetric_eigen();
        let (min_ev, max_ev) = eig
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
        if min_ev <= 0.0 {
            return Err(Error::SingularPairing {
                detail: format!("matrix is not positive definite (smallest eigenvalue {min_ev:.6e})"),
                condition,
            });
        }
        let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
        let a = &root * symplectic_form(self.n_modes()) * &root;
        let h = DMatrix::from_fn(dim, dim, |i, j| Complex::new(0.0, a[(i, j)]));
        let mut spectrum: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        spectrum.sort_by(|x, y| y.total_cmp(x));

        let n = self.n_modes();
        let scale = spectrum[0].abs().max(1.0);
        let mut nus = Vec::with_capacity(n);
        for k in 0..n {
            let pos = spectrum[k];
            let neg = -spectrum[dim - 1 - k];
            if pos <= 0.0 || (pos - neg).abs() > 1e-8 * scale {
                return Err(Error::SingularPairing {
                    detail: format!("eigenvalues {pos:.6e} and {:.6e} do not form a ± pair", -neg),
                    condition,
                });
            }
            nus.push(0.5 * (pos + neg));
        }
        Ok(nus)
    }

    pub fn min_symplectic_eigenvalue(&self) -> Result<f64> {
        Ok(self.symplectic_eigenvalues()?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// True when every symplectic eigenvalue is at least `1 - tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        matches!(self.min_symplectic_eigenvalue(), Ok(nu) if nu >= 1.0 - tol)
    }

    pub fn ensure_physical(&self, tol: f64) -> Result<()> {
        let nu = self.min_symplectic_eigenvalue()?;
        if nu < 1.0 - tol {
            return Err(Error::UnphysicalEigenvalue { eigenvalue: nu });
        }
        Ok(())
    }
}

/// Standard symplectic form `⊕ [[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

impl fmt::Display for CovarianceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.entries.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        CovarianceMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_has_unit_eigenvalue() {
        assert_eq!(CovarianceMatrix::vacuum(1).symplectic_eigenvalues().unwrap(), vec![1.0]);
        let nus = CovarianceMatrix::vacuum(3).symplectic_eigenvalues().unwrap();
        assert_eq!(nus.len(), 3);
        for nu in nus {
            assert_abs_diff_eq!(nu, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_mode_examples() {
        let squeezed = CovarianceMatrix::diagonal(&[4.0, 0.25]).unwrap();
        assert_eq!(squeezed.symplectic_eigenvalues().unwrap(), vec![1.0]);
        let thermal = CovarianceMatrix::diagonal(&[2.0, 2.0]).unwrap();
        assert_eq!(thermal.symplectic_eigenvalues().unwrap(), vec![2.0]);
    }

    #[test]
    fn product_state_spectrum_is_sorted_descending() {
        let cm = CovarianceMatrix::diagonal(&[1.0, 1.0, 3.0, 3.0, 8.0, 0.5]).unwrap();
        let nus = cm.symplectic_eigenvalues().unwrap();
        assert_abs_diff_eq!(nus[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nus[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nus[2], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(CovarianceMatrix::new(DMatrix::zeros(3, 3)).is_err());
        assert!(CovarianceMatrix::new(DMatrix::zeros(2, 4)).is_err());
        assert!(CovarianceMatrix::from_rows(&[vec![1.0, 0.1], vec![0.2, 1.0]]).is_err());
        assert!(CovarianceMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0]]).is_err());
        assert!(CovarianceMatrix::diagonal(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn unphysical_state_is_reported_not_rejected() {
        let cm = CovarianceMatrix::diagonal(&[0.3, 0.3]).unwrap();
        assert_abs_diff_eq!(cm.symplectic_eigenvalues().unwrap()[0], 0.3, epsilon = 1e-15);
        assert!(!cm.is_physical(PHYSICAL_TOL));
        assert!(matches!(
            cm.ensure_physical(PHYSICAL_TOL),
            Err(Error::UnphysicalEigenvalue { .. })
        ));
    }

    #[test]
    fn indefinite_matrix_gives_diagnostics() {
        let cm = CovarianceMatrix::diagonal(&[1.0, 1.0, -1.0, 1.0]).unwrap();
        match cm.symplectic_eigenvalues() {
            Err(Error::SingularPairing { condition, .. }) => assert!(condition.is_infinite()),
            other => panic!("expected pairing error, got {other:?}"),
        }
    }

    #[test]
    fn select_modes_reorders() {
        let cm = CovarianceMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let swapped = cm.select_modes(&[1, 0]).unwrap();
        assert_eq!(swapped.get(0, 0), 3.0);
        assert_eq!(swapped.get(3, 3), 2.0);
        assert!(cm.select_modes(&[0, 0]).is_err());
        assert!(cm.select_modes(&[2]).is_err());
    }

    #[test]
    fn json_is_row_major() {
        let cm = CovarianceMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 3.0]]).unwrap();
        let text = serde_json::to_string(&cm).unwrap();
        assert_eq!(text, "[[2.0,0.5],[0.5,3.0]]");
        let back: CovarianceMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cm);
        assert!(serde_json::from_str::<CovarianceMatrix>("[[1.0,2.0],[0.0,1.0]]").is_err());
    }
}
