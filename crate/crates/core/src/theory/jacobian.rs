use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest accepted input: a 12 x 12 image with three channels.
pub const MAX_JACOBIAN_INPUTS: usize = 3 * 12 * 12;

/// Central-difference Jacobian `J[r][c] = (f(x + h e_c)_r - f(x - h e_c)_r) / 2h`.
pub fn numerical_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    if x.is_empty() || x.len() > MAX_JACOBIAN_INPUTS {
        return Err(Error::InvalidArgument(format!(
            "jacobian input has {} coordinates (limit {MAX_JACOBIAN_INPUTS})",
            x.len()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be > 0")));
    }
    let rows = f(x).len();
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut probe = x.to_vec();
    for c in 0..x.len() {
        probe[c] = x[c] + h;
        let plus = f(&probe);
        probe[c] = x[c] - h;
        let minus = f(&probe);
        probe[c] = x[c];
        if plus.len() != rows || minus.len() != rows {
            return Err(Error::DimensionMismatch("function output length varies".into()));
        }
        for r in 0..rows {
            jac[(r, c)] = (plus[r] - minus[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}
