//! Covariance matrices, positive-semidefinite repair and Cholesky factors.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const JITTER_FLOOR: f64 = 1e-12;

/// A symmetric real matrix (covariance or correlation).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    /// Wraps `m` after checking symmetry to 1e-12 relative to its largest entry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::LengthMismatch(format!(
                "covariance matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..m.nrows() {
            for j in 0..i {
                let diff = (m[(i, j)] - m[(j, i)]).abs();
                if !(diff <= SYMMETRY_TOL * scale) {
                    return Err(Error::NonSymmetric {
                        row: i,
                        col: j,
                        diff,
                    });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::LengthMismatch("ragged covariance rows".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = Σ`, stored packed by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerFactor {
    dim: usize,
    data: Vec<f64>,
}

impl LowerFactor {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut l = Self::zeros(dim);
        for i in 0..dim {
            l.set(i, i, 1.0);
        }
        l
    }

    /// Takes the lower triangle of a square matrix; the strict upper part is
    /// ignored.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut l = Self::zeros(m.nrows());
        for i in 0..m.nrows() {
            for j in 0..=i {
                l.set(i, j, m[(i, j)]);
            }
        }
        l
    }

    #[inline]
    fn offset(i: usize) -> usize {
        i * (i + 1) / 2
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[Self::offset(i) + j]
        }
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[Self::offset(i) + j] = v;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row `i` of the factor, entries `0..=i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let o = Self::offset(i);
        &self.data[o..o + i + 1]
    }

    /// `out = L · z`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    /// `L Lᵀ` as a dense matrix.
    pub fn covariance(&self) -> DMatrix<f64> {
        let l = self.to_dense();
        &l * l.transpose()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

fn cholesky_strict(m: &DMatrix<f64>) -> Option<LowerFactor> {
    factor_with(m, |d| if d > 0.0 && d.is_finite() { Some(d) } else { None })
}

fn cholesky_floored(m: &DMatrix<f64>) -> Option<LowerFactor> {
    factor_with(m, |d| {
        if d.is_finite() {
            Some(d.max(JITTER_FLOOR))
        } else {
            None
        }
    })
}

fn factor_with<F: Fn(f64) -> Option<f64>>(m: &DMatrix<f64>, pivot: F) -> Option<LowerFactor> {
    let n = m.nrows();
    let mut l = LowerFactor::zeros(n);
    for j in 0..n {
        let s: f64 = l.row(j)[..j].iter().map(|v| v * v).sum();
        let d = pivot(m[(j, j)] - s)?;
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in j + 1..n {
            let s: f64 = l.row(i)[..j]
                .iter()
                .zip(&l.row(j)[..j])
                .map(|(a, b)| a * b)
                .sum();
            l.set(i, j, (m[(i, j)] - s) / ljj);
        }
    }
    Some(l)
}

/// Nearest-PSD repair: clip negative eigenvalues to zero, then rescale so that
/// every entry whose input diagonal was exactly one keeps a unit diagonal.
pub fn repair_psd(cov: &CovarianceMatrix) -> CovarianceMatrix {
    let n = cov.dim();
    if n == 0 {
        return cov.clone();
    }
    let eig = SymmetricEigen::new(cov.0.clone());
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    let mut r = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    r = (&r + r.transpose()) * 0.5;
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            if (cov.0[(i, i)] - 1.0).abs() < SYMMETRY_TOL && r[(i, i)] > 0.0 {
                1.0 / r[(i, i)].sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] *= scale[i] * scale[j];
        }
    }
    for i in 0..n {
        if scale[i] != 1.0 {
            r[(i, i)] = 1.0;
        }
    }
    CovarianceMatrix(r)
}

/// Cholesky factor of `cov`. Positive-definite input is factored exactly;
/// anything else goes through [`repair_psd`] and is then factored with a
/// 1e-12 floor on the pivots.
pub fn cholesky_psd(cov: &CovarianceMatrix) -> Result<LowerFactor> {
    // re-check in case the matrix was built by hand
    let cov = CovarianceMatrix::new(cov.0.clone())?;
    if let Some(l) = cholesky_strict(&cov.0) {
        return Ok(l);
    }
    let repaired = repair_psd(&cov);
    log::warn!(
        "covariance matrix of dimension {} is not positive definite; repaired by eigenvalue clipping",
        cov.dim()
    );
    cholesky_floored(&repaired.0)
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed after PSD repair".into()))
}

/// Draws `L · ε` with ε i.i.d. standard normal.
pub fn sample_correlated_gaussians<R: Rng + ?Sized>(factor: &LowerFactor, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..factor.dim())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let mut out = vec![0.0; factor.dim()];
    factor.apply(&z, &mut out);
    out
}
