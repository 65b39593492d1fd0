use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("distribution is not regularly varying: {0}")]
    NotRegularlyVarying(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("lag {lag} exceeds the largest available lag {s_max}")]
    LagOutOfRange { lag: usize, s_max: usize },

    #[error("lag range is empty: s1 = {s1} > s2 = {s2}")]
    InvalidLagRange { s1: usize, s2: usize },

    #[error("centering requires a finite second moment (tail index {alpha})")]
    InfiniteVariance { alpha: f64 },

    #[error("centering requires the generating filter and noise distribution")]
    MissingProvenance,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("null K-matrix at lags ({s1}, {s2})")]
    NullKernel { s1: usize, s2: usize },

    #[error("tied non-zero K-eigenvalues at positions {0} and {1} (eigenvectors are not identifiable)")]
    TiedKernelEigenvalues(usize, usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("vector is not unit norm (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("tail index {alpha} outside (0, 4)")]
    TailIndexOutOfRange { alpha: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("empty sample")]
    EmptySample,

    #[error("fixed-point solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigendecomposition residual {residual:e} exceeds tolerance")]
    EigenResidual { residual: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
