use nalgebra::{ComplexField, DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `A x = b` by LU with partial pivoting. A pivot smaller than
/// `1e-13` times the largest one is reported as [`Error::Singular`].
pub fn solve_dense_linear<T>(a: &DMatrix<T>, b: &DVector<T>) -> Result<DVector<T>>
where
    T: ComplexField + Copy,
{
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!(
            "system {}x{} with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut largest = u[(0, 0)].modulus();
    let mut smallest = largest.clone();
    for i in 1..n {
        let m = u[(i, i)].modulus();
        if m > largest {
            largest = m.clone();
        }
        if m < smallest {
            smallest = m;
        }
    }
    let rel: T::RealField = nalgebra::convert(1e-13);
    if !(smallest > rel * largest) {
        return Err(Error::Singular);
    }
    lu.solve(b).ok_or(Error::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::C64;

    #[test]
    fn real_system() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let x_true = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &a * &x_true;
        let x = solve_dense_linear(&a, &b).unwrap();
        assert!((x - x_true).norm() < 1e-12);
    }

    #[test]
    fn complex_system() {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 1.0), C64::new(0.0, 2.0), C64::new(3.0, 0.0), C64::new(1.0, -1.0)],
        );
        let x_true = DVector::from_vec(vec![C64::new(0.5, -1.0), C64::new(2.0, 0.25)]);
        let b = &a * &x_true;
        let x = solve_dense_linear(&a, &b).unwrap();
        assert!((x - x_true).norm() < 1e-12);
    }

    #[test]
    fn singular_and_mismatch() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_dense_linear(&a, &b), Err(Error::Singular)));
        let b3 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(solve_dense_linear(&a, &b3), Err(Error::Dimension(_))));
    }
}
