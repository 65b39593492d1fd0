//! The linear field `X_it = sum_{k,l} h_kl Z_{i-k, t-l}` and its lagged views.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{sample_noise, NoiseField, TailDistribution};

/// Finitely supported coefficient array `(h_kl)`.
///
/// `coefficients[a][b]` holds `h_{row_offset + a, col_offset + b}`; every
/// coefficient outside the block is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterCoefficients {
    #[serde(default)]
    pub row_offset: i64,
    #[serde(default)]
    pub col_offset: i64,
    pub coefficients: Vec<Vec<f64>>,
}

impl FilterCoefficients {
    pub fn new(row_offset: i64, col_offset: i64, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        let f = Self { row_offset, col_offset, coefficients };
        f.validate()?;
        Ok(f)
    }

    /// `h_00 = 1`, so that `X = Z`.
    pub fn identity() -> Self {
        Self { row_offset: 0, col_offset: 0, coefficients: vec![vec![1.0]] }
    }

    /// The separable filter `h_kl = d_k c_l` for `k, l >= 0`.
    pub fn separable(d: &[f64], c: &[f64]) -> Result<Self> {
        let coefficients = d.iter().map(|dk| c.iter().map(|cl| dk * cl).collect()).collect();
        Self::new(0, 0, coefficients)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.coefficients.len();
        if rows == 0 || self.coefficients[0].is_empty() {
            return Err(Error::InvalidFilter("coefficient block is empty".into()));
        }
        let cols = self.coefficients[0].len();
        if self.coefficients.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidFilter("coefficient rows have unequal lengths".into()));
        }
        if self.coefficients.iter().flatten().any(|h| !h.is_finite()) {
            return Err(Error::InvalidFilter("coefficients must be finite".into()));
        }
        if self.coefficients.iter().flatten().all(|&h| h == 0.0) {
            return Err(Error::InvalidFilter("all coefficients are zero".into()));
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.coefficients.len()
    }

    pub fn ncols(&self) -> usize {
        self.coefficients[0].len()
    }

    pub fn k_min(&self) -> i64 {
        self.row_offset
    }

    pub fn k_max(&self) -> i64 {
        self.row_offset + self.nrows() as i64 - 1
    }

    pub fn l_min(&self) -> i64 {
        self.col_offset
    }

    pub fn l_max(&self) -> i64 {
        self.col_offset + self.ncols() as i64 - 1
    }

    /// Smallest `m` with `h_kl = 0` whenever `|k| ∨ |l| > m`.
    pub fn support_radius(&self) -> u64 {
        [self.k_min(), self.k_max(), self.l_min(), self.l_max()].iter().map(|v| v.unsigned_abs()).max().unwrap()
    }

    /// `h_kl`, zero outside the support.
    pub fn get(&self, k: i64, l: i64) -> f64 {
        let a = k - self.row_offset;
        let b = l - self.col_offset;
        if a < 0 || b < 0 || a >= self.nrows() as i64 || b >= self.ncols() as i64 {
            return 0.0;
        }
        self.coefficients[a as usize][b as usize]
    }

    /// Dense coefficient block as a matrix (rows `k`, columns `l`).
    pub fn block(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows(), self.ncols(), |a, b| self.coefficients[a][b])
    }

    pub fn sum(&self) -> f64 {
        self.coefficients.iter().flatten().sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.coefficients.iter().flatten().map(|h| h * h).sum()
    }

    /// `a * self + b * other` on the union of both supports.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        let k0 = self.k_min().min(other.k_min());
        let k1 = self.k_max().max(other.k_max());
        let l0 = self.l_min().min(other.l_min());
        let l1 = self.l_max().max(other.l_max());
        let coefficients =
            (k0..=k1).map(|k| (l0..=l1).map(|l| a * self.get(k, l) + b * other.get(k, l)).collect()).collect();
        Self::new(k0, l0, coefficients)
    }
}

/// Simulated (or observed) `p x (n + s_max)` data with enough columns for every lag up to `s_max`.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    pub p: usize,
    pub n: usize,
    pub s_max: usize,
    pub values: DMatrix<f64>,
    pub filter: Option<FilterCoefficients>,
    pub noise: Option<SourceNoise>,
}

/// Noise box behind a simulated [`DataMatrix`].
///
/// Box entry `(r, c)` is `Z_{r + row_origin, c + col_origin}` in the 0-based
/// row/time coordinates of the process.
#[derive(Debug, Clone)]
pub struct SourceNoise {
    pub field: NoiseField,
    pub row_origin: i64,
    pub col_origin: i64,
}

impl SourceNoise {
    /// `Z_it` for process rows `0..p` and times `0..n`.
    pub fn core_view(&self, p: usize, n: usize) -> DMatrixView<'_, f64> {
        let r0 = (-self.row_origin) as usize;
        let c0 = (-self.col_origin) as usize;
        self.field.values.view((r0, c0), (p, n))
    }
}

impl DataMatrix {
    /// Wraps user-supplied observations; the first `n` columns form `X_n(0)`.
    pub fn from_observations(values: DMatrix<f64>, n: usize) -> Result<Self> {
        let (p, cols) = values.shape();
        if p == 0 || n == 0 || cols < n {
            return Err(Error::InvalidDimensions(format!(
                "need a p x (n + s_max) matrix with p, n >= 1, got {p}x{cols} with n = {n}"
            )));
        }
        Ok(Self { p, n, s_max: cols - n, values, filter: None, noise: None })
    }

    /// The `p x n` noise block `(Z_it)`, `i < p`, `t < n`, when the data was simulated.
    pub fn noise_view(&self) -> Option<DMatrixView<'_, f64>> {
        self.noise.as_ref().map(|z| z.core_view(self.p, self.n))
    }

    pub fn dist(&self) -> Option<&TailDistribution> {
        self.noise.as_ref().map(|z| &z.field.dist)
    }
}

pub fn generate_process(
    filter: &FilterCoefficients,
    dist: &TailDistribution,
    p: usize,
    n: usize,
    s_max: usize,
    seed: u64,
) -> Result<DataMatrix> {
    filter.validate()?;
    if p == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!("p and n must be positive, got p = {p}, n = {n}")));
    }
    let width = n + s_max;
    // Noise indices needed by X_it, i < p, t < width, always including the p x n core.
    let row_lo = (-filter.k_max()).min(0);
    let row_hi = (p as i64 - 1 - filter.k_min()).max(p as i64 - 1);
    let col_lo = (-filter.l_max()).min(0);
    let col_hi = (width as i64 - 1 - filter.l_min()).max(n as i64 - 1);
    let field = sample_noise(dist, (row_hi - row_lo + 1) as usize, (col_hi - col_lo + 1) as usize, seed)?;

    let mut values = DMatrix::<f64>::zeros(p, width);
    for (a, row) in filter.coefficients.iter().enumerate() {
        for (b, &h) in row.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let k = filter.row_offset + a as i64;
            let l = filter.col_offset + b as i64;
            let r0 = (-k - row_lo) as usize;
            let c0 = (-l - col_lo) as usize;
            values.zip_apply(&field.values.view((r0, c0), (p, width)), |x, z| *x += h * z);
        }
    }

    Ok(DataMatrix {
        p,
        n,
        s_max,
        values,
        filter: Some(filter.clone()),
        noise: Some(SourceNoise { field, row_origin: row_lo, col_origin: col_lo }),
    })
}

/// `X_n(s)`: columns `s .. s + n`.
pub fn lagged_view(x: &DataMatrix, s: usize) -> Result<DMatrixView<'_, f64>> {
    if s > x.s_max {
        return Err(Error::LagOutOfRange { lag: s, s_max: x.s_max });
    }
    Ok(x.values.columns(s, x.n))
}
