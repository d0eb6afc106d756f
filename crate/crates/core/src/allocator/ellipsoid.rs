//! Central-cut ellipsoid method in `R^n`.
//!
//! The ellipsoid is `{z : (z - x)^T P^{-1} (z - x) <= 1}`. A cut with normal
//! `a` keeps the half `a^T (z - x) <= 0`.

use crate::numerics::{HermitianMatrix, NumericsError};

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: Vec<f64>,
    /// Row-major `n x n`, symmetric positive definite.
    shape: Vec<f64>,
}

impl Ellipsoid {
    /// Ball of radius `radius` around `center`.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let n = center.len();
        let mut shape = vec![0.0; n * n];
        for i in 0..n {
            shape[i * n + i] = radius * radius;
        }
        Self { center, shape }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &[f64] {
        &self.shape
    }

    fn shape_matrix(&self) -> HermitianMatrix {
        let n = self.dim();
        let rows: Vec<f64> = self.shape.clone();
        let refs: Vec<&[f64]> = rows.chunks(n).collect();
        HermitianMatrix::from_matrix(crate::numerics::ComplexMatrix::from_real_rows(&refs)).expect("square")
    }

    /// `ln det P`.
    pub fn log_det(&self) -> Result<f64, NumericsError> {
        Ok(self.shape_matrix().log2_det()? * std::f64::consts::LN_2)
    }

    /// Largest semi-axis, `sqrt(lambda_max(P))`.
    pub fn radius(&self) -> Result<f64, NumericsError> {
        let e = self.shape_matrix().eigen()?;
        Ok(e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
    }

    /// Applies a central cut. Returns `false` (and leaves the ellipsoid
    /// untouched) when `a^T P a` is not positive, which only happens for a
    /// zero normal or a numerically collapsed shape.
    pub fn cut(&mut self, a: &[f64]) -> bool {
        let n = self.dim();
        assert_eq!(a.len(), n, "cut normal dimension");
        let pa: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.shape[i * n + j] * a[j]).sum()).collect();
        let apa: f64 = a.iter().zip(&pa).map(|(x, y)| x * y).sum();
        if !(apa > 0.0) || !apa.is_finite() {
            return false;
        }
        let norm = apa.sqrt();
        let b: Vec<f64> = pa.iter().map(|v| v / norm).collect();
        if n == 1 {
            // Interval bisection.
            self.center[0] -= b[0] / 2.0;
            self.shape[0] /= 4.0;
            return true;
        }
        let nf = n as f64;
        for i in 0..n {
            self.center[i] -= b[i] / (nf + 1.0);
        }
        let factor = nf * nf / (nf * nf - 1.0);
        let coef = 2.0 / (nf + 1.0);
        for i in 0..n {
            for j in 0..n {
                self.shape[i * n + j] = factor * (self.shape[i * n + j] - coef * b[i] * b[j]);
            }
        }
        for i in 0..n {
            for j in 0..i {
                let avg = 0.5 * (self.shape[i * n + j] + self.shape[j * n + i]);
                self.shape[i * n + j] = avg;
                self.shape[j * n + i] = avg;
            }
        }
        true
    }
}
