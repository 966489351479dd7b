use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{eig::symmetric_eigen, hermitian_asymmetry, real_embedding, CMat, CVec, C64};
use crate::error::{Error, Result};

/// Draws `candidates` vectors `ξ ~ CN(0, X)`, maps each through `project`
/// and keeps the one with the highest `score`. Returns the winner and its
/// score.
pub fn gaussian_randomize<R, P, S>(
    x: &CMat,
    candidates: usize,
    mut project: P,
    mut score: S,
    rng: &mut R,
) -> Result<(CVec, f64)>
where
    R: Rng + ?Sized,
    P: FnMut(CVec) -> CVec,
    S: FnMut(&CVec) -> f64,
{
    let n = x.nrows();
    if x.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!("covariance {}x{}", x.nrows(), x.ncols())));
    }
    let asym = hermitian_asymmetry(x);
    if asym > 1e-8 {
        return Err(Error::NotHermitian(asym));
    }
    let factor = covariance_factor(x);
    let mut best: Option<(CVec, f64)> = None;
    let mut w = nalgebra::DVector::<f64>::zeros(2 * n);
    for _ in 0..candidates.max(1) {
        for wi in w.iter_mut() {
            *wi = rng.sample(StandardNormal);
        }
        let r = &factor * &w;
        let xi = CVec::from_fn(n, |i, _| C64::new(r[i], r[i + n]));
        let cand = project(xi);
        let s = score(&cand);
        let better = match &best {
            None => true,
            Some((_, b)) => s > *b || (b.is_nan() && !s.is_nan()),
        };
        if better {
            best = Some((cand, s));
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Real factor `F` with `F Fᵀ = ½·embed(X)`, negative eigenvalues clipped.
fn covariance_factor(x: &CMat) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_eigen(&real_embedding(x));
    let mut f = vecs;
    for (j, lambda) in vals.iter().enumerate() {
        let s = (0.5 * lambda.max(0.0)).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn unit_modulus(v: CVec) -> CVec {
        v.map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) })
    }

    #[test]
    fn rank_one_is_recovered_up_to_phase() {
        let v = CVec::from_vec(vec![
            C64::from_polar(1.0, 0.3),
            C64::from_polar(1.0, -1.2),
            C64::from_polar(1.0, 2.5),
        ]);
        let x = &v * v.adjoint();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let score = |c: &CVec| (v.adjoint() * c)[(0, 0)].norm_sqr();
        let (best, s) = gaussian_randomize(&x, 20, unit_modulus, score, &mut rng).unwrap();
        let opt = score(&v);
        assert!(s >= opt * (1.0 - 1e-9), "{s} vs {opt}");
        for z in best.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_covariance_matches() {
        let x = CMat::from_row_slice(
            2,
            2,
            &[C64::new(2.0, 0.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), C64::new(1.0, 0.0)],
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut acc = CMat::zeros(2, 2);
        let draws = 20000;
        let mut count = 0usize;
        let _ = gaussian_randomize(
            &x,
            draws,
            |xi| {
                acc += &xi * xi.adjoint();
                count += 1;
                xi
            },
            |_| 0.0,
            &mut rng,
        )
        .unwrap();
        let est = acc / C64::from(count as f64);
        assert!((est - &x).norm() / x.norm() < 0.05);
    }
}
