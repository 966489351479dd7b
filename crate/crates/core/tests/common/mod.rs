#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use starfl_core::kernel::eig::hermitian_eigenvalues;
use starfl_core::kernel::{solve_sdp, CMat, Coeff, Relation, SdpOptions, SdpProblem, C64};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| C64::new(normal(rng), normal(rng)));
    (&a + a.adjoint()) * C64::from(0.5)
}

/// Real coefficients `c[0] + c[1] x + … + x^n` of `det(xI − A)`.
fn char_poly(a: &CMat) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![C64::from(0.0); n + 1];
    c[n] = C64::from(1.0);
    let mut m = CMat::zeros(n, n);
    for k in 1..=n {
        m = a * &m + CMat::identity(n, n) * c[n - k + 1];
        c[n - k] = -(a * &m).trace() / C64::from(k as f64);
    }
    c.iter().map(|z| z.re).collect()
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// Real roots by sign changes on a fine grid, bisection and Newton polish.
fn real_roots(c: &[f64], bound: f64) -> Vec<f64> {
    let d: Vec<f64> = (1..c.len()).map(|i| i as f64 * c[i]).collect();
    let steps = 40_000;
    let mut roots = Vec::new();
    let mut prev = (-bound, horner(c, -bound));
    for i in 1..=steps {
        let x = -bound + 2.0 * bound * i as f64 / steps as f64;
        let fx = horner(c, x);
        if prev.1 == 0.0 || prev.1.signum() != fx.signum() {
            let (mut lo, mut hi) = (prev.0, x);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if horner(c, lo).signum() == horner(c, mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mut r = 0.5 * (lo + hi);
            for _ in 0..3 {
                let step = horner(c, r) / horner(&d, r);
                if step.is_finite() && step.abs() < hi - lo + 1e-12 {
                    r -= step;
                }
            }
            roots.push(r);
        }
        prev = (x, fx);
    }
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

/// Largest gap between eigensolver output and characteristic-polynomial
/// roots over random Hermitian 4x4 matrices.
pub fn eigen_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let a = random_hermitian(4, &mut rng);
        let bound = (0..4).map(|i| (0..4).map(|j| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
        let oracle = real_roots(&char_poly(&a), bound);
        let got = hermitian_eigenvalues(&a).unwrap();
        if oracle.len() != 4 {
            return f64::INFINITY;
        }
        for (x, y) in got.iter().zip(&oracle) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// Maximises `f` over a box by a dense grid followed by repeated zooms
/// around the best point.
fn zoom_grid(f: impl Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], points: usize) -> f64 {
    let d = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let mut best = (f64::NEG_INFINITY, lo.clone());
    for _ in 0..8 {
        let total = points.pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|k| {
                    let i = rem % points;
                    rem /= points;
                    lo[k] + (hi[k] - lo[k]) * i as f64 / (points - 1) as f64
                })
                .collect();
            let v = f(&x);
            if v > best.0 {
                best = (v, x);
            }
        }
        for k in 0..d {
            let w = 4.0 * (hi[k] - lo[k]) / (points - 1) as f64;
            lo[k] = best.1[k] - w;
            hi[k] = best.1[k] + w;
        }
    }
    best.0
}

fn re_tr(c: &CMat, x: &CMat) -> f64 {
    (c * x).trace().re
}

/// `max Re Tr(C X)` over 2x2 `X ⪰ 0` with `Tr X = 1` and `X₁₁ ≤ cap`. The
/// optimum is on the rank-one boundary `|X₁₂|² = X₁₁ X₂₂`.
fn case_2x2(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let c = random_hermitian(2, rng);
    let cap = 0.1 + 0.8 * rng.random::<f64>();
    let mut p = SdpProblem::new();
    let x = p.add_block(2);
    p.maximize(x, Coeff::Dense(c.clone()));
    p.constrain(vec![(x, Coeff::identity(2))], Relation::Eq, 1.0);
    p.constrain(vec![(x, Coeff::entry(0, 1.0))], Relation::Le, cap);
    let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
    let oracle = zoom_grid(
        |v| {
            let a = v[0].clamp(0.0, cap);
            let off = C64::from_polar((a * (1.0 - a)).sqrt(), v[1]);
            re_tr(&c, &CMat::from_row_slice(2, 2, &[C64::from(a), off, off.conj(), C64::from(1.0 - a)]))
        },
        &[0.0, 0.0],
        &[cap, std::f64::consts::TAU],
        161,
    );
    (sol.objective, oracle, sol.gap)
}

/// `max Tr(C X)` over real 3x3 correlation matrices, i.e. Gram matrices of
/// three unit vectors, parametrised by three angles.
fn case_3x3(rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let r = nalgebra::DMatrix::<f64>::from_fn(3, 3, |_, _| normal(rng));
    let c = CMat::from_fn(3, 3, |i, j| C64::from(0.5 * (r[(i, j)] + r[(j, i)])));
    let mut p = SdpProblem::new();
    let x = p.add_block(3);
    p.maximize(x, Coeff::Dense(c.clone()));
    for i in 0..3 {
        p.constrain(vec![(x, Coeff::entry(i, 1.0))], Relation::Eq, 1.0);
    }
    let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
    let oracle = zoom_grid(
        |v| {
            let u = [[1.0, 0.0, 0.0], [v[0].cos(), v[0].sin(), 0.0], [v[1].cos(), v[1].sin() * v[2].cos(), v[1].sin() * v[2].sin()]];
            let g = CMat::from_fn(3, 3, |i, j| C64::from((0..3).map(|k| u[i][k] * u[j][k]).sum::<f64>()));
            re_tr(&c, &g)
        },
        &[0.0, 0.0, 0.0],
        &[std::f64::consts::PI, std::f64::consts::PI, std::f64::consts::TAU],
        41,
    );
    (sol.objective, oracle, sol.gap)
}

/// `(solver, grid, gap)` per instance, alternating 2x2 and 3x3 cases.
pub fn sdp_oracle_cases(instances: usize, seed: u64) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..instances).map(|i| if i % 2 == 0 { case_2x2(&mut rng) } else { case_3x3(&mut rng) }).collect()
}
