use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 100_000;

/// Largest eigenvalue modulus from a real Schur decomposition.
pub(crate) fn spectral_radius(matrix: DMatrix<f64>) -> Result<f64> {
    if matrix.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = matrix
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or(Error::NonConvergence)?;
    let radius = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max);
    if radius.is_finite() {
        Ok(radius)
    } else {
        Err(Error::NonConvergence)
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
