//! Dense symmetric matrices and their spectral utilities.
//!
//! Everything downstream (certificates, gains, resistances) reduces to
//! eigencomputations on small dense symmetric matrices, so this module owns
//! the one eigensolver call site and the numeric conventions shared by the
//! rest of the crate:
//!
//! - rank tolerance for the pseudo-inverse is relative,
//!   `1e-10 * max |eigenvalue|`, so behavior is invariant under rescaling;
//! - a matrix counts as PSD iff `lambda_min >= -1e-8 * max(1, lambda_max)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative eigenvalue cutoff below which the pseudo-inverse treats a mode
/// as part of the kernel.
pub const RANK_RTOL: f64 = 1e-10;

/// Relative slack in the positive-semidefiniteness test:
/// PSD iff `lambda_min >= -PSD_RTOL * max(1, lambda_max)`.
pub const PSD_RTOL: f64 = 1e-8;

/// Absolute-per-scale symmetry tolerance accepted by [`SymMatrix::from_matrix`].
pub const SYMMETRY_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a_ij - a_ji| up to {max_deviation:.3e} exceeds {tolerance:.3e}")]
    NotSymmetric { max_deviation: f64, tolerance: f64 },
}

/// Dense real symmetric matrix.
///
/// The constructor enforces symmetry up to `SYMMETRY_RTOL * max |entry|`
/// and stores the exactly symmetrized average, so every downstream
/// eigendecomposition sees a bitwise-symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self, SpectralError> {
        if m.nrows() != m.ncols() {
            return Err(SpectralError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let tolerance = SYMMETRY_RTOL * scale;
        let mut max_deviation = 0.0f64;
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                max_deviation = max_deviation.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if max_deviation > tolerance {
            return Err(SpectralError::NotSymmetric {
                max_deviation,
                tolerance,
            });
        }
        let mut sym = m;
        for i in 0..sym.nrows() {
            for j in (i + 1)..sym.ncols() {
                let avg = 0.5 * (sym[(i, j)] + sym[(j, i)]);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        Ok(Self { m: sym })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// Identity scaled by `factor`.
    pub fn scaled_identity(dim: usize, factor: f64) -> Self {
        Self {
            m: DMatrix::identity(dim, dim) * factor,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// `self + factor * other`.
    pub fn scaled_add(&self, other: &SymMatrix, factor: f64) -> SymMatrix {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        SymMatrix {
            m: &self.m + &other.m * factor,
        }
    }

    /// `factor * self`.
    pub fn scale(&self, factor: f64) -> SymMatrix {
        SymMatrix {
            m: &self.m * factor,
        }
    }

    /// Negated matrix.
    pub fn neg(&self) -> SymMatrix {
        self.scale(-1.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    /// Quadratic form `x^T A x`.
    pub fn quadratic_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.m * x))
    }

    /// Full orthonormal eigendecomposition with eigenvalues in ascending
    /// order. Deterministic for identical input.
    pub fn spectrum(&self) -> Spectrum {
        let eig = self.m.clone().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(i));
        }
        Spectrum {
            eigenvalues,
            vectors,
        }
    }

    /// Moore-Penrose pseudo-inverse through the eigendecomposition.
    ///
    /// Eigenvalues with magnitude at most `RANK_RTOL * max |eigenvalue|`
    /// are treated as zero and excluded from the inversion.
    pub fn pseudo_inverse(&self) -> SymMatrix {
        let eig = self.spectrum();
        let n = self.dim();
        let max_mag = eig
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &l| acc.max(l.abs()));
        let tau = RANK_RTOL * max_mag;
        let mut inv = DMatrix::zeros(n, n);
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda.abs() > tau {
                let v = eig.vectors.column(k);
                let w = 1.0 / lambda;
                for i in 0..n {
                    for j in 0..n {
                        inv[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
        }
        SymMatrix { m: inv }
    }

    /// Positive-semidefiniteness verdict under the crate-wide convention.
    pub fn psd(&self) -> PsdVerdict {
        let eig = self.spectrum();
        let lambda_min = eig.lambda_min();
        let lambda_max = eig.lambda_max();
        let tolerance = PSD_RTOL * lambda_max.max(1.0);
        PsdVerdict {
            psd: lambda_min >= -tolerance,
            lambda_min,
            lambda_max,
            tolerance,
        }
    }

    /// Negative-semidefiniteness verdict: PSD test applied to `-A`.
    pub fn nsd(&self) -> PsdVerdict {
        self.neg().psd()
    }

    /// Entries as nested rows, for JSON payloads.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }
}

/// Outcome of a semidefiniteness test, with the margin that produced it.
#[derive(Debug, Clone, Copy)]
pub struct PsdVerdict {
    pub psd: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub tolerance: f64,
}

/// Eigendecomposition of a [`SymMatrix`]: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    /// Smallest eigenvalue strictly above the relative noise floor
    /// `RANK_RTOL * max(1, |lambda_max|)`. `None` when the matrix is
    /// numerically zero on every mode.
    pub fn smallest_positive(&self) -> Option<f64> {
        let floor = RANK_RTOL * self.lambda_max().abs().max(1.0);
        self.eigenvalues.iter().copied().find(|&l| l > floor)
    }

    /// `V diag(lambda) V^T`, for reconstruction-error checks.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.eigenvalues.len();
        let mut d = DMatrix::zeros(n, n);
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            d[(k, k)] = l;
        }
        &self.vectors * d * self.vectors.transpose()
    }
}
