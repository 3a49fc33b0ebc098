//! Dense complex solves with a 2-norm condition estimate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{HnaError, Result};

/// Condition numbers above this are treated as numerically singular.
pub const SINGULAR_CONDITION: f64 = 1e16;

/// Ratio of extreme singular values.
pub fn condition_2norm(a: &DMatrix<Complex64>) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Solves `a x = b` by LU with partial pivoting and returns `x` with the
/// condition estimate of `a`.
pub fn lu_solve(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> Result<(DVector<Complex64>, f64)> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(HnaError::Config(format!(
            "system shape mismatch: {}x{} matrix, {} right-hand side entries",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let cond = condition_2norm(a);
    if !(cond < SINGULAR_CONDITION) {
        return Err(HnaError::SingularSystem { condition: cond });
    }
    let x = a.clone().lu().solve(b).ok_or(HnaError::SingularSystem { condition: cond })?;
    if x.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(HnaError::SingularSystem { condition: cond });
    }
    Ok((x, cond))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let c = |r: f64, i: f64| Complex64::new(r, i);
        let a = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(1.0, 0.0), c(3.0, 0.0)]);
        let x = DVector::from_vec(vec![c(1.0, -1.0), c(0.5, 2.0)]);
        let b = &a * &x;
        let (y, cond) = lu_solve(&a, &b).unwrap();
        assert!((y - x).norm() < 1e-14);
        assert!(cond >= 1.0);
    }

    #[test]
    fn rejects_singular() {
        let a = DMatrix::from_element(3, 3, Complex64::new(1.0, 0.0));
        let b = DVector::from_element(3, Complex64::new(1.0, 0.0));
        assert!(matches!(lu_solve(&a, &b), Err(HnaError::SingularSystem { .. })));
    }

    #[test]
    fn identity_condition_is_one() {
        let a = DMatrix::<Complex64>::identity(4, 4);
        assert!((condition_2norm(&a) - 1.0).abs() < 1e-14);
    }
}
