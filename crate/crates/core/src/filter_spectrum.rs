//! Deterministic matrices derived from the filter: `M(s)`, `K(s1, s2)`, the
//! symmetrized `K~(s1, s2)`, their spectra, and embeddings of small blocks into
//! `p`-dimensional space.
//!
//! All blocks are indexed by the filter's row support `k_min..=k_max`; a block
//! placed at noise row `a` covers process rows `a + k_min ..= a + k_max`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autocovariance::symmetric_eigen;
use crate::error::{Error, Result};
use crate::linear_process::FilterCoefficients;

/// Relative threshold below which a K-eigenvalue does not count toward the rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Which sample matrix a kernel describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `K(s1, s2)` for `P(s1, s2)`; spectrum values are `v_j^2`.
    Power,
    /// `K~(s1, s2)` for `A(s1, s2)`; spectrum values are singular values `v~_j`.
    Symmetrized,
}

impl KernelKind {
    /// Power of `a_np` that normalizes the matching eigen/singular values.
    pub fn norm_power(self) -> i32 {
        match self {
            KernelKind::Power => 4,
            KernelKind::Symmetrized => 2,
        }
    }

    /// `D_i^2` for `P`, `|D_i|` for `A`.
    pub fn row_weight(self, d: f64) -> f64 {
        match self {
            KernelKind::Power => d * d,
            KernelKind::Symmetrized => d.abs(),
        }
    }

    /// `Z^4` for `P`, `Z^2` for `A`.
    pub fn entry_weight(self, z: f64) -> f64 {
        let z2 = z * z;
        match self {
            KernelKind::Power => z2 * z2,
            KernelKind::Symmetrized => z2,
        }
    }
}

/// `M(s)_{ij} = sum_l h_{i,l} h_{j,l+s}` on the row support of the filter.
pub fn build_m(filter: &FilterCoefficients, s: usize) -> DMatrix<f64> {
    let r = filter.nrows();
    let c = filter.ncols();
    let h = &filter.coefficients;
    DMatrix::from_fn(r, r, |i, j| (0..c.saturating_sub(s)).map(|l| h[i][l] * h[j][l + s]).sum())
}

/// Spectrum of `K(s1, s2)` or `K~(s1, s2)` on the dense block.
#[derive(Debug, Clone)]
pub struct KSpectrum {
    pub s1: usize,
    pub s2: usize,
    pub kind: KernelKind,
    /// The dense block `K^` (or `K~`).
    pub block: DMatrix<f64>,
    /// Filter row index of the block's first coordinate.
    pub row_offset: i64,
    /// `v_1^2 >= v_2^2 >= ...` (or `v~_1 >= v~_2 >= ...`), one per block coordinate.
    pub values: Vec<f64>,
    /// Unit eigenvectors `u_j` as columns, first non-zero entry positive.
    pub vectors: DMatrix<f64>,
    pub rank: usize,
}

impl KSpectrum {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// The values counted in the rank.
    pub fn positive_values(&self) -> &[f64] {
        &self.values[..self.rank]
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }

    /// Errors if two non-zero eigenvalues coincide (their eigenvectors would not be unique).
    pub fn check_no_ties(&self) -> Result<()> {
        let top = self.values[0];
        for j in 1..self.rank {
            if (self.values[j - 1] - self.values[j]).abs() <= 1e-9 * top {
                return Err(Error::TiedKernelEigenvalues(j - 1, j));
            }
        }
        Ok(())
    }

    pub fn record(&self) -> KSpectrumRecord {
        KSpectrumRecord {
            lags: [self.s1, self.s2],
            kind: self.kind,
            row_offset: self.row_offset,
            eigenvalues: self.values.clone(),
            eigenvectors: self.vectors.column_iter().map(|c| c.iter().copied().collect()).collect(),
            rank: self.rank,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.record()).expect("plain data serializes")
    }
}

/// Serializable view of a [`KSpectrum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSpectrumRecord {
    pub lags: [usize; 2],
    pub kind: KernelKind,
    pub row_offset: i64,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub rank: usize,
}

fn check_lags(s1: usize, s2: usize) -> Result<()> {
    if s1 > s2 {
        return Err(Error::InvalidLagRange { s1, s2 });
    }
    Ok(())
}

fn is_null(block: &DMatrix<f64>, filter: &FilterCoefficients) -> bool {
    let scale = filter.sum_of_squares();
    block.amax() <= 1e-14 * scale * scale
}

/// `K(s1, s2) = sum_{s=s1}^{s2} M(s) M(s)'` with its ordered spectrum.
pub fn build_k(filter: &FilterCoefficients, s1: usize, s2: usize, rank_tol: f64) -> Result<KSpectrum> {
    filter.validate()?;
    check_lags(s1, s2)?;
    let r = filter.nrows();
    let mut block = DMatrix::<f64>::zeros(r, r);
    for s in s1..=s2 {
        let m = build_m(filter, s);
        block.gemm(1.0, &m, &m.transpose(), 1.0);
    }
    // exact symmetry
    let block = DMatrix::from_fn(r, r, |i, j| 0.5 * (block[(i, j)] + block[(j, i)]));
    if is_null(&block, filter) {
        return Err(Error::NullKernel { s1, s2 });
    }
    let eig = symmetric_eigen(&block)?;
    // K is PSD; round-off negatives are zero
    let values: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let rank = values.iter().filter(|&&v| v > rank_tol * values[0]).count();
    Ok(KSpectrum {
        s1,
        s2,
        kind: KernelKind::Power,
        block,
        row_offset: filter.k_min(),
        values,
        vectors: eig.vectors,
        rank,
    })
}

/// `K~(s1, s2) = sum_{s=s1}^{s2} (M(s) + M(s)') / 2`, ordered by absolute eigenvalue.
pub fn build_k_sym(filter: &FilterCoefficients, s1: usize, s2: usize, rank_tol: f64) -> Result<KSpectrum> {
    filter.validate()?;
    check_lags(s1, s2)?;
    let r = filter.nrows();
    let mut acc = DMatrix::<f64>::zeros(r, r);
    for s in s1..=s2 {
        acc += build_m(filter, s);
    }
    let block = DMatrix::from_fn(r, r, |i, j| 0.5 * (acc[(i, j)] + acc[(j, i)]));
    if is_null(&block, filter) {
        return Err(Error::NullKernel { s1, s2 });
    }
    let eig = symmetric_eigen(&block)?.by_magnitude();
    let rank = eig.values.iter().filter(|&&v| v > rank_tol * eig.values[0]).count();
    Ok(KSpectrum {
        s1,
        s2,
        kind: KernelKind::Symmetrized,
        block,
        row_offset: filter.k_min(),
        values: eig.values,
        vectors: eig.vectors,
        rank,
    })
}

/// Places `block` in a `p x p` zero matrix with its `(0, 0)` entry at `(start, start)`.
///
/// Rows/columns falling outside `0..p` are clipped. A centered `(2m+1)`-block
/// around position `a` uses `start = a - m`.
pub fn embed_matrix(block: &DMatrix<f64>, start: i64, p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    let b = block.nrows();
    for i in 0..b {
        let gi = start + i as i64;
        if gi < 0 || gi >= p as i64 {
            continue;
        }
        for j in 0..b {
            let gj = start + j as i64;
            if gj < 0 || gj >= p as i64 {
                continue;
            }
            out[(gi as usize, gj as usize)] = block[(i, j)];
        }
    }
    out
}

/// Places `u` at coordinates `start ..` of a `p`-vector, clipping at the ends
/// without renormalizing.
pub fn embed_vector(u: &[f64], start: i64, p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (j, &v) in u.iter().enumerate() {
        let g = start + j as i64;
        if g >= 0 && g < p as i64 {
            out[g as usize] = v;
        }
    }
    out
}
