use nalgebra::{DMatrix, DVector};

use super::{hermitian_asymmetry, real_embedding, CMat, CVec, C64};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const HERMITIAN_TOL: f64 = 1e-10;

/// Cyclic Jacobi eigen-decomposition of a real symmetric matrix.
/// Returns eigenvalues and the matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    if scale == 0.0 {
        return (DVector::zeros(n), v);
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Largest eigenvalue of a Hermitian matrix and a unit eigenvector.
pub fn hermitian_eig_max(h: &CMat) -> Result<(f64, CVec)> {
    let n = h.nrows();
    if h.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!("eigenproblem on {}x{}", h.nrows(), h.ncols())));
    }
    let asym = hermitian_asymmetry(h);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    let (vals, vecs) = symmetric_eigen(&real_embedding(h));
    let imax = vals.imax();
    let mut u = CVec::from_fn(n, |i, _| C64::new(vecs[(i, imax)], vecs[(i + n, imax)]));
    let norm = u.norm();
    u /= C64::from(norm);
    Ok((vals[imax], u))
}

/// Eigenvalues of a Hermitian matrix in descending order, each listed once.
pub fn hermitian_eigenvalues(h: &CMat) -> Result<Vec<f64>> {
    let asym = hermitian_asymmetry(h);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    let (vals, _) = symmetric_eigen(&real_embedding(h));
    let mut v: Vec<f64> = vals.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    // the embedding doubles every eigenvalue
    Ok(v.into_iter().step_by(2).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = CMat::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a + a.adjoint()
    }

    #[test]
    fn real_symmetric_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&a);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - a).norm() < 1e-12);
        let mut sorted: Vec<f64> = vals.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let s2 = 2f64.sqrt();
        for (got, want) in sorted.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pair_has_small_residual() {
        for (n, seed) in [(1, 1), (4, 2), (16, 3), (33, 4)] {
            let h = random_hermitian(n, seed);
            let (lambda, u) = hermitian_eig_max(&h).unwrap();
            let resid = (&h * &u - &u * C64::from(lambda)).norm();
            assert!(resid <= 1e-8 * h.norm(), "n={n} residual {resid}");
            assert!((u.norm() - 1.0).abs() < 1e-12);
            let all = hermitian_eigenvalues(&h).unwrap();
            assert_eq!(all.len(), n);
            assert!((all[0] - lambda).abs() < 1e-9 * h.norm());
        }
    }

    #[test]
    fn rank_one_top_vector() {
        let v = CVec::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 1.0)]);
        let h = &v * v.adjoint();
        let (lambda, u) = hermitian_eig_max(&h).unwrap();
        assert!((lambda - v.norm_squared()).abs() < 1e-12);
        let overlap = (u.adjoint() * &v)[(0, 0)].norm() / v.norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = random_hermitian(3, 9);
        h[(0, 1)] += C64::new(1.0, 0.0);
        assert!(matches!(hermitian_eig_max(&h), Err(Error::NotHermitian(_))));
    }
}
