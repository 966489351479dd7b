use thiserror::Error;

/// Errors raised by the numerical kernel and the optimizers built on it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is singular")]
    Singular,

    #[error("semidefinite program is infeasible")]
    SdpInfeasible,

    #[error("semidefinite program is unbounded")]
    SdpUnbounded,

    #[error("interior point method did not converge after {iterations} iterations (gap {gap:.3e}, residual {residual:.3e})")]
    SdpNoConvergence {
        iterations: usize,
        gap: f64,
        residual: f64,
        best: Box<crate::kernel::sdp::SdpSolution>,
    },

    #[error("no feasible point in search range [{lo}, {hi}]")]
    SearchExhausted { lo: f64, hi: f64 },

    #[error("target {target} is not bracketed by f(lo)={f_lo} and f(hi)={f_hi}")]
    NoBracket { target: f64, f_lo: f64, f_hi: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
