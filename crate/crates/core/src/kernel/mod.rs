//! Small dense numerical kernel: Hermitian eigensolver, SDP interior point
//! solver, Gaussian randomization, linear solves and scalar searches.

pub mod eig;
pub mod linear;
pub mod randomize;
pub mod sdp;
pub mod search;

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub use eig::{hermitian_eig_max, symmetric_eigen};
pub use linear::solve_dense_linear;
pub use randomize::gaussian_randomize;
pub use sdp::{solve_sdp, Coeff, Relation, SdpOptions, SdpProblem, SdpSolution};
pub use search::{bisect_monotone, one_dim_search, Bracket, ScanOrder};

/// Relative Frobenius asymmetry `‖H − Hᴴ‖ / ‖H‖`.
pub fn hermitian_asymmetry(h: &CMat) -> f64 {
    let norm = h.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (h - h.adjoint()).norm() / norm
}

/// Real symmetric embedding `[[Re, −Im], [Im, Re]]` of a Hermitian matrix.
pub fn real_embedding(h: &CMat) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

pub fn hermitize(m: &mut CMat) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// `Re Tr(A B)` without forming the product.
pub(crate) fn re_trace_product(a: &CMat, b: &CMat) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let x = a[(i, k)];
            let y = b[(k, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}
