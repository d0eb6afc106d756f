//! Small dense complex and hermitian matrix kernel.
//!
//! Everything here targets the tiny matrices that show up in uplink
//! allocation problems (antenna counts of a handful), so the routines favour
//! robustness and simplicity over asymptotic speed: Cholesky for
//! log-determinants and inverses, cyclic Jacobi rotations for the hermitian
//! eigenproblem.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Off-diagonal Frobenius norm (relative to the matrix norm) at which Jacobi
/// sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;
/// Maximum number of cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    ConvergenceFailure { sweeps: usize, off_norm: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from real-valued rows, mostly handy in tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> ComplexMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sqr().sqrt()
    }

    /// Real part of `tr(self^* rhs)`, the real inner product on matrices.
    pub fn inner(&self, rhs: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "inner dimension mismatch");
        self.data.iter().zip(&rhs.data).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Square matrix equal to its own conjugate transpose.
///
/// Construction always symmetrizes (`(m + m^*) / 2`), so accumulated
/// rounding from iterative updates never leaks into downstream
/// factorizations.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn from_matrix(m: ComplexMatrix) -> Result<Self, NumericsError> {
        if !m.is_square() {
            return Err(NumericsError::DimensionMismatch(format!(
                "hermitian matrix must be square, got {}x{}",
                m.rows, m.cols
            )));
        }
        Ok(Self::hermitize(m))
    }

    fn hermitize(mut m: ComplexMatrix) -> Self {
        let n = m.rows;
        for i in 0..n {
            m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        Self(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(ComplexMatrix::identity(n).scale(s))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(ComplexMatrix::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) }))
    }

    /// `h * self * h^*`, the covariance seen through channel `h`.
    pub fn congruence(&self, h: &ComplexMatrix) -> HermitianMatrix {
        assert_eq!(h.cols, self.dim(), "congruence dimension mismatch");
        Self::hermitize(h.matmul(&self.0).matmul(&h.adjoint()))
    }

    /// `h^* * self * h`.
    pub fn adjoint_congruence(&self, h: &ComplexMatrix) -> HermitianMatrix {
        assert_eq!(h.rows, self.dim(), "congruence dimension mismatch");
        Self::hermitize(h.adjoint().matmul(&self.0).matmul(h))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn add(&self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(self.0.add(&rhs.0))
    }

    pub fn sub(&self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix(self.0.sub(&rhs.0))
    }

    pub fn scale(&self, s: f64) -> HermitianMatrix {
        HermitianMatrix(self.0.scale(s))
    }

    pub fn add_assign(&mut self, rhs: &HermitianMatrix) {
        assert_eq!(self.dim(), rhs.dim(), "add dimension mismatch");
        for (a, b) in self.0.data.iter_mut().zip(&rhs.0.data) {
            *a += b;
        }
    }

    /// Largest absolute deviation from exact hermitian symmetry.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Lower-triangular `L` with `L L^* = self`.
    pub fn cholesky(&self) -> Result<ComplexMatrix, NumericsError> {
        let n = self.dim();
        let a = &self.0;
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(NumericsError::NotPositiveDefinite { index: j, pivot: d });
            }
            let ljj = d.sqrt();
            l[(j, j)] = C64::new(ljj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }

    /// log2 of the determinant, via Cholesky.
    pub fn log2_det(&self) -> Result<f64, NumericsError> {
        match self.dim() {
            1 => {
                let d = self.0[(0, 0)].re;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(NumericsError::NotPositiveDefinite { index: 0, pivot: d });
                }
                Ok(d.log2())
            }
            _ => {
                let l = self.cholesky()?;
                Ok(2.0 * (0..self.dim()).map(|i| l[(i, i)].re.log2()).sum::<f64>())
            }
        }
    }

    /// Inverse of a positive definite matrix.
    pub fn inverse_pd(&self) -> Result<HermitianMatrix, NumericsError> {
        let n = self.dim();
        if n == 1 {
            let d = self.0[(0, 0)].re;
            if !(d > 0.0) || !d.is_finite() {
                return Err(NumericsError::NotPositiveDefinite { index: 0, pivot: d });
            }
            return Ok(HermitianMatrix::from_real_diag(&[1.0 / d]));
        }
        let l = self.cholesky()?;
        // L^{-1} by forward substitution, then A^{-1} = L^{-*} L^{-1}.
        let mut linv = ComplexMatrix::zeros(n, n);
        for col in 0..n {
            for i in col..n {
                let mut s = if i == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                for k in col..i {
                    s -= l[(i, k)] * linv[(k, col)];
                }
                linv[(i, col)] = s / l[(i, i)];
            }
        }
        Ok(Self::hermitize(linv.adjoint().matmul(&linv)))
    }

    /// Eigendecomposition with ascending eigenvalues.
    pub fn eigen(&self) -> Result<Eigen, NumericsError> {
        jacobi_eigen(self)
    }

    /// Nearest positive semidefinite matrix in Frobenius norm.
    pub fn project_psd(&self) -> Result<HermitianMatrix, NumericsError> {
        if self.dim() == 1 {
            return Ok(HermitianMatrix::from_real_diag(&[self.0[(0, 0)].re.max(0.0)]));
        }
        let eig = self.eigen()?;
        if eig.values.iter().all(|&v| v >= 0.0) {
            return Ok(self.clone());
        }
        let clamped: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
        Ok(eig.reconstruct_with(&clamped))
    }

    pub fn min_eigenvalue(&self) -> Result<f64, NumericsError> {
        if self.dim() == 1 {
            return Ok(self.0[(0, 0)].re);
        }
        Ok(self.eigen()?.values[0])
    }
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hermitian{:?}", self.0)
    }
}

/// Result of a hermitian eigendecomposition: `m = V diag(values) V^*`.
#[derive(Clone, Debug)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns are the eigenvectors.
    pub vectors: ComplexMatrix,
}

impl Eigen {
    pub fn reconstruct_with(&self, values: &[f64]) -> HermitianMatrix {
        let n = values.len();
        let v = &self.vectors;
        let m = ComplexMatrix::from_fn(n, n, |i, j| (0..n).map(|k| v[(i, k)] * values[k] * v[(j, k)].conj()).sum());
        HermitianMatrix::hermitize(m)
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.reconstruct_with(&self.values)
    }
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn jacobi_eigen(m: &HermitianMatrix) -> Result<Eigen, NumericsError> {
    let n = m.dim();
    let mut a = m.0.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();
    let threshold = JACOBI_TOL * scale.max(f64::MIN_POSITIVE);

    let mut sweeps = 0;
    let mut off = off_diagonal_norm(&a);
    while off > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(NumericsError::ConvergenceFailure { sweeps, off_norm: off });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= f64::MIN_POSITIVE {
                    continue;
                }
                let phase = apq / mag; // e^{i phi}
                let tau = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let ephi_conj = phase.conj();

                // A <- A G with G = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on (p, q).
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * ephi_conj * s;
                    a[(k, q)] = akp * s + akq * ephi_conj * c;
                }
                // A <- G^* A.
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * phase * s;
                    a[(q, k)] = apk * s + aqk * phase * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * ephi_conj * s;
                    v[(k, q)] = vkp * s + vkq * ephi_conj * c;
                }
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&a);
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = idx.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    Ok(Eigen { values, vectors })
}

/// log2 |m| of a positive definite hermitian matrix.
pub fn log2_det_psd(m: &HermitianMatrix) -> Result<f64, NumericsError> {
    m.log2_det()
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn project_psd(m: &HermitianMatrix) -> Result<HermitianMatrix, NumericsError> {
    m.project_psd()
}

pub fn hermitian_eigen(m: &HermitianMatrix) -> Result<Eigen, NumericsError> {
    m.eigen()
}

/// Classic water-filling: maximizes `sum log2(1 + g_i p_i)` subject to
/// `sum p_i = budget`, `p_i >= 0`. Zero gains never receive power.
pub fn water_fill(gains: &[f64], budget: f64) -> Vec<f64> {
    let mut powers = vec![0.0; gains.len()];
    if budget <= 0.0 {
        return powers;
    }
    let mut active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if active.is_empty() {
        return powers;
    }
    active.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    // Shrink the active set until the weakest channel sits below the water level.
    let mut k = active.len();
    let level = loop {
        let inv_sum: f64 = active[..k].iter().map(|&i| 1.0 / gains[i]).sum();
        let level = (budget + inv_sum) / k as f64;
        if level - 1.0 / gains[active[k - 1]] >= 0.0 || k == 1 {
            break level;
        }
        k -= 1;
    };
    for &i in &active[..k] {
        powers[i] = (level - 1.0 / gains[i]).max(0.0);
    }
    powers
}

/// Rate-targeted water-filling: the least total power with
/// `sum log2(1 + g_i p_i) = bits`. Returns the water level `mu` (so
/// `p_i = (mu - 1/g_i)^+`) and the powers, or `None` if every gain is zero.
pub fn water_fill_rate(gains: &[f64], bits: f64) -> Option<(f64, Vec<f64>)> {
    let mut active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let mut powers = vec![0.0; gains.len()];
    if bits <= 0.0 {
        return Some((1.0 / gains[active[0]].max(f64::MIN_POSITIVE), powers));
    }
    active.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut log_sum = 0.0;
    let mut mu = 0.0;
    for k in 0..active.len() {
        log_sum += gains[active[k]].log2();
        mu = ((bits - log_sum) / (k + 1) as f64).exp2();
        if k + 1 == active.len() || mu <= 1.0 / gains[active[k + 1]] {
            break;
        }
    }
    for &i in &active {
        powers[i] = (mu - 1.0 / gains[i]).max(0.0);
    }
    Some((mu, powers))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm(rows: &[&[f64]]) -> HermitianMatrix {
        HermitianMatrix::from_matrix(ComplexMatrix::from_real_rows(rows)).unwrap()
    }

    /// Deterministic pseudo-random complex matrix, test-only.
    fn lcg_matrix(n: usize, seed: u64) -> ComplexMatrix {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        ComplexMatrix::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    fn gram_plus_identity(n: usize, seed: u64) -> HermitianMatrix {
        let b = lcg_matrix(n, seed);
        HermitianMatrix::from_matrix(b.matmul(&b.adjoint()).add(&ComplexMatrix::identity(n))).unwrap()
    }

    #[test]
    fn log2_det_identity_and_scalar() {
        assert_eq!(log2_det_psd(&HermitianMatrix::identity(3)).unwrap(), 0.0);
        assert!((log2_det_psd(&herm(&[&[4.0]])).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn log2_det_matches_eigenvalues() {
        for seed in 0..5 {
            let a = gram_plus_identity(3, seed);
            let eig = a.eigen().unwrap();
            let oracle: f64 = eig.values.iter().map(|v| v.log2()).sum();
            assert!((a.log2_det().unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn log2_det_rejects_indefinite() {
        let m = herm(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(m.log2_det(), Err(NumericsError::NotPositiveDefinite { index: 1, .. })));
        assert!(matches!(herm(&[&[0.0]]).log2_det(), Err(NumericsError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn project_psd_examples() {
        let p = project_psd(&herm(&[&[1.0, 0.0], &[0.0, -1.0]])).unwrap();
        assert!(p.sub(&herm(&[&[1.0, 0.0], &[0.0, 0.0]])).as_matrix().frobenius_norm() < 1e-12);
        let p = project_psd(&herm(&[&[-2.0]])).unwrap();
        assert_eq!(p.as_matrix()[(0, 0)].re, 0.0);
        let a = gram_plus_identity(3, 7);
        let p = project_psd(&a).unwrap();
        assert!(p.sub(&a).as_matrix().frobenius_norm() < 1e-10);
    }

    #[test]
    fn eigen_examples() {
        let e = herm(&[&[3.0, 0.0], &[0.0, 1.0]]).eigen().unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        let e = HermitianMatrix::identity(2).eigen().unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
    }

    #[test]
    fn eigen_reconstructs_seeded_4x4() {
        let b = lcg_matrix(4, 42);
        let m = HermitianMatrix::from_matrix(b.add(&b.adjoint())).unwrap();
        let e = m.eigen().unwrap();
        assert!(e.reconstruct().sub(&m).as_matrix().frobenius_norm() < 1e-9);
        let vhv = e.vectors.adjoint().matmul(&e.vectors);
        assert!(vhv.sub(&ComplexMatrix::identity(4)).frobenius_norm() < 1e-9);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn inverse_pd_roundtrip() {
        let a = gram_plus_identity(3, 3);
        let inv = a.inverse_pd().unwrap();
        let prod = a.as_matrix().matmul(inv.as_matrix());
        assert!(prod.sub(&ComplexMatrix::identity(3)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn construction_hermitizes() {
        let m = ComplexMatrix::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, (i as f64) - (j as f64)));
        let h = HermitianMatrix::from_matrix(m).unwrap();
        assert!(h.asymmetry() < 1e-12);
        assert!(HermitianMatrix::from_matrix(ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn water_fill_basics() {
        let p = water_fill(&[1.0, 1.0], 2.0);
        assert_eq!(p, vec![1.0, 1.0]);
        // Weak channel shut off: level = (1 + 1) / 1 = 2, 2 - 1/0.1 < 0.
        let p = water_fill(&[1.0, 0.1], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        assert!((water_fill(&[2.0, 0.5, 1.0], 3.0).iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert_eq!(water_fill(&[0.0], 1.0), vec![0.0]);
    }

    #[test]
    fn water_fill_rate_inverts_water_fill() {
        let gains = [2.0, 0.5, 1.0, 0.05];
        for budget in [0.1, 1.0, 3.0, 40.0] {
            let p = water_fill(&gains, budget);
            let bits: f64 = p.iter().zip(gains).map(|(p, g)| (1.0 + p * g).log2()).sum();
            let (_, q) = water_fill_rate(&gains, bits).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-9 * budget, "{p:?} vs {q:?}");
            }
        }
        assert!(water_fill_rate(&[0.0], 1.0).is_none());
        // One channel, two bits: p = 3 / g.
        let (_, p) = water_fill_rate(&[0.5], 2.0).unwrap();
        assert!((p[0] - 6.0).abs() < 1e-12);
    }
}
