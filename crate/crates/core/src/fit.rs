//! Least-squares polynomial fits.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Coefficients `c_0..=c_degree` minimising `Σ (y_i − Σ c_k x_i^k)²`.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() <= degree {
        return Err(Error::invalid("degree", format!("{} points cannot determine degree {degree}", x.len())));
    }
    let a = DMatrix::from_fn(x.len(), degree + 1, |i, k| x[i].powi(k as i32));
    let b = DVector::from_column_slice(y);
    let coeffs = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|_| Error::Singular)?;
    Ok(coeffs.iter().copied().collect())
}

/// Evaluate `Σ c_k x^k`.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
