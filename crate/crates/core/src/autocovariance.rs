//! Lagged sample autocovariance matrices `C_n(s)`, the sums `P(s1, s2)` and
//! `A(s1, s2)`, their spectra, and the row statistics `D_i`.

use nalgebra::{Complex, DMatrix, DMatrixView, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_process::{lagged_view, DataMatrix, FilterCoefficients};
use crate::noise::TailDistribution;

/// Eigenvector entries at or below this magnitude are treated as zero when fixing signs.
pub const SIGN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMode {
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CenteringPolicy {
    pub mode: CenteringMode,
    pub beta_hint: Option<f64>,
}

impl CenteringPolicy {
    pub fn off() -> Self {
        Self { mode: CenteringMode::Off, beta_hint: None }
    }

    pub fn on() -> Self {
        Self { mode: CenteringMode::On, beta_hint: None }
    }

    pub fn auto() -> Self {
        Self::default()
    }

    /// Decides whether `E[X_n(0) X_n(s)']` is subtracted.
    ///
    /// In auto mode centering is on iff `alpha > 2 (1 + beta)` with
    /// `beta = beta_hint` or `log p / log n`. The boundary `alpha = 2 (1 + beta)`
    /// resolves to off and is flagged.
    pub fn resolve(&self, dist: Option<&TailDistribution>, p: usize, n: usize) -> Result<Centering> {
        let beta = match self.beta_hint {
            Some(b) if (0.0..=1.0).contains(&b) => b,
            Some(b) => return Err(Error::Domain(format!("beta hint must lie in [0, 1], got {b}"))),
            None => growth_exponent(p, n),
        };
        let threshold = 2.0 * (1.0 + beta);
        let (on, boundary) = match self.mode {
            CenteringMode::On => (true, false),
            CenteringMode::Off => (false, false),
            CenteringMode::Auto => match dist {
                None => (false, false),
                Some(d) => match d.tail_index() {
                    None => (true, false),
                    Some(alpha) if (alpha - threshold).abs() <= 1e-9 * threshold => (false, true),
                    Some(alpha) => (alpha > threshold, false),
                },
            },
        };
        if on {
            if let Some(d) = dist {
                if d.second_moment().is_none() {
                    return Err(Error::InfiniteVariance { alpha: d.alpha.unwrap_or(f64::NAN) });
                }
            }
        }
        Ok(Centering { on, beta, boundary, mode: self.mode })
    }
}

/// Finite-sample proxy `log p / log n` for the growth exponent in `p = n^beta`.
pub fn growth_exponent(p: usize, n: usize) -> f64 {
    if p <= 1 {
        0.0
    } else if n <= 1 {
        1.0
    } else {
        (p as f64).ln() / (n as f64).ln()
    }
}

/// A resolved [`CenteringPolicy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    pub on: bool,
    pub beta: f64,
    /// `alpha` sat on `2 (1 + beta)`; centering was left off.
    pub boundary: bool,
    pub mode: CenteringMode,
}

impl Centering {
    pub fn off() -> Self {
        Self { on: false, beta: f64::NAN, boundary: false, mode: CenteringMode::Off }
    }
}

/// `E[X_n(0) X_n(s)']` for the linear process with the given filter and noise.
///
/// Entry `(i, j)` is `n (Var Z sum_{k,l} h_kl h_{k+j-i, l+s} + (E Z)^2 (sum h)^2)`.
pub fn expected_autocov(
    filter: &FilterCoefficients,
    dist: &TailDistribution,
    p: usize,
    n: usize,
    s: usize,
) -> Result<DMatrix<f64>> {
    let second = dist.second_moment().ok_or(Error::InfiniteVariance { alpha: dist.alpha.unwrap_or(f64::NAN) })?;
    let mean = dist.mean().unwrap_or(0.0);
    let var = second - mean * mean;
    let width = filter.nrows() as i64 - 1;
    let s = s as i64;
    // band[d + width] = sum_{k,l} h_kl h_{k+d, l+s}
    let band: Vec<f64> = (-width..=width)
        .map(|d| {
            let mut acc = 0.0;
            for k in filter.k_min()..=filter.k_max() {
                for l in filter.l_min()..=filter.l_max() {
                    acc += filter.get(k, l) * filter.get(k + d, l + s);
                }
            }
            acc
        })
        .collect();
    let mean_term = mean * mean * filter.sum() * filter.sum();
    let nf = n as f64;
    Ok(DMatrix::from_fn(p, p, |i, j| {
        let d = j as i64 - i as i64;
        let b = if d.abs() <= width { band[(d + width) as usize] } else { 0.0 };
        nf * (var * b + mean_term)
    }))
}

/// `C_n(s) = X_n(0) X_n(s)'`, minus its expectation when `centering.on`.
pub fn sample_autocov(x: &DataMatrix, s: usize, centering: &Centering) -> Result<DMatrix<f64>> {
    let x0 = lagged_view(x, 0)?;
    let xs = lagged_view(x, s)?;
    let mut c = x0 * xs.transpose();
    if centering.on {
        let (filter, dist) = match (&x.filter, x.dist()) {
            (Some(f), Some(d)) => (f, d),
            _ => return Err(Error::MissingProvenance),
        };
        c -= expected_autocov(filter, dist, x.p, x.n, s)?;
    }
    Ok(c)
}

/// `C_n(0), ..., C_n(max_lag)` computed once and shared by all lag sums.
#[derive(Debug, Clone)]
pub struct LaggedCovariances {
    pub centering: Centering,
    mats: Vec<DMatrix<f64>>,
}

impl LaggedCovariances {
    pub fn compute(x: &DataMatrix, max_lag: usize, policy: &CenteringPolicy) -> Result<Self> {
        if max_lag > x.s_max {
            return Err(Error::LagOutOfRange { lag: max_lag, s_max: x.s_max });
        }
        let centering = policy.resolve(x.dist(), x.p, x.n)?;
        let mats = (0..=max_lag).map(|s| sample_autocov(x, s, &centering)).collect::<Result<_>>()?;
        Ok(Self { centering, mats })
    }

    pub fn from_matrices(mats: Vec<DMatrix<f64>>, centering: Centering) -> Self {
        Self { centering, mats }
    }

    pub fn max_lag(&self) -> usize {
        self.mats.len() - 1
    }

    pub fn get(&self, s: usize) -> Result<&DMatrix<f64>> {
        self.mats.get(s).ok_or(Error::LagOutOfRange { lag: s, s_max: self.max_lag() })
    }

    fn check_range(&self, s1: usize, s2: usize) -> Result<()> {
        if s1 > s2 {
            return Err(Error::InvalidLagRange { s1, s2 });
        }
        if s2 > self.max_lag() {
            return Err(Error::LagOutOfRange { lag: s2, s_max: self.max_lag() });
        }
        Ok(())
    }

    /// `P(s1, s2) = sum_{s=s1}^{s2} C(s) C(s)'`, exactly symmetric.
    pub fn power_sum(&self, s1: usize, s2: usize) -> Result<DMatrix<f64>> {
        self.check_range(s1, s2)?;
        let p = self.mats[0].nrows();
        let mut acc = DMatrix::<f64>::zeros(p, p);
        for c in &self.mats[s1..=s2] {
            acc.gemm(1.0, c, &c.transpose(), 1.0);
        }
        mirror_lower(&mut acc);
        Ok(acc)
    }

    /// `A(s1, s2) = sum_{s=s1}^{s2} (C(s) + C(s)') / 2`, exactly symmetric.
    pub fn symmetrized_sum(&self, s1: usize, s2: usize) -> Result<DMatrix<f64>> {
        self.check_range(s1, s2)?;
        let p = self.mats[0].nrows();
        let mut acc = DMatrix::<f64>::zeros(p, p);
        for c in &self.mats[s1..=s2] {
            acc += c;
        }
        Ok(DMatrix::from_fn(p, p, |i, j| 0.5 * (acc[(i, j)] + acc[(j, i)])))
    }
}

fn mirror_lower(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            m[(j, i)] = m[(i, j)];
        }
    }
}

pub fn power_sum(x: &DataMatrix, s1: usize, s2: usize, policy: &CenteringPolicy) -> Result<DMatrix<f64>> {
    if s1 > s2 {
        return Err(Error::InvalidLagRange { s1, s2 });
    }
    LaggedCovariances::compute(x, s2, policy)?.power_sum(s1, s2)
}

pub fn symmetrized_sum(x: &DataMatrix, s1: usize, s2: usize, policy: &CenteringPolicy) -> Result<DMatrix<f64>> {
    if s1 > s2 {
        return Err(Error::InvalidLagRange { s1, s2 });
    }
    LaggedCovariances::compute(x, s2, policy)?.symmetrized_sum(s1, s2)
}

/// Eigenpairs of a symmetric matrix: values descending, eigenvectors as
/// orthonormal columns whose first non-zero entry is positive.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpectralResult {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, i: usize) -> nalgebra::DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// Reorders by absolute eigenvalue; the values become singular values.
    pub fn by_magnitude(&self) -> SpectralResult {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].abs().total_cmp(&self.values[a].abs()).then(a.cmp(&b)));
        SpectralResult {
            values: idx.iter().map(|&i| self.values[i].abs()).collect(),
            vectors: self.vectors.select_columns(&idx),
        }
    }
}

fn asymmetry(m: &DMatrix<f64>) -> Result<f64> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::InvalidDimensions(format!("expected a square matrix, got {r}x{c}")));
    }
    let mut worst = 0.0_f64;
    for j in 0..r {
        for i in (j + 1)..r {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let scale = m.amax();
    if worst > 1e-10 * scale {
        return Err(Error::NotSymmetric { asymmetry: worst });
    }
    Ok(worst)
}

/// Flips columns so the first entry exceeding [`SIGN_EPS`] in magnitude is positive.
pub fn normalize_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        if let Some(first) = col.iter().find(|v| v.abs() > SIGN_EPS) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Bound on [`eigen_residual`] accepted from the eigensolver.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-9;

/// `max |M V - V diag(lambda)| / max |M|`.
pub fn eigen_residual(m: &DMatrix<f64>, eig: &SpectralResult) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut r = m * &eig.vectors;
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col -= eig.vectors.column(j) * eig.values[j];
    }
    r.amax() / scale
}

pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SpectralResult> {
    asymmetry(m)?;
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = eig.eigenvectors.select_columns(&idx);
    normalize_signs(&mut vectors);
    let out = SpectralResult { values, vectors };
    let residual = eigen_residual(m, &out);
    if residual > EIGEN_RESIDUAL_TOL {
        return Err(Error::EigenResidual { residual });
    }
    Ok(out)
}

/// Descending eigenvalues only.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    asymmetry(m)?;
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Row statistics `D_i` with the ordering of their squares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowSums {
    /// `D_i` in row order.
    pub d: Vec<f64>,
    /// `L_1, ..., L_p` (0-based): `d[order[i]]^2` is the `i`-th largest square.
    pub order: Vec<usize>,
    /// Seed of the randomized tie-break among equal squares.
    pub tie_seed: u64,
}

impl RowSums {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// `D_(i)^2`, 0-based.
    pub fn squared(&self, i: usize) -> f64 {
        let v = self.d[self.order[i]];
        v * v
    }

    /// `D_(1)^2 >= D_(2)^2 >= ...`
    pub fn squared_desc(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.squared(i)).collect()
    }

    pub fn from_values(d: Vec<f64>, tie_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
        let keys: Vec<u64> = (0..d.len()).map(|_| rng.random()).collect();
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&a, &b| (d[b] * d[b]).total_cmp(&(d[a] * d[a])).then(keys[a].cmp(&keys[b])));
        Self { d, order, tie_seed }
    }
}

/// `D_i = sum_t Z_it^2`, minus `n E[Z^2]` when centering is on.
pub fn row_sum_squares(
    z: DMatrixView<'_, f64>,
    centering: &Centering,
    dist: Option<&TailDistribution>,
    tie_seed: u64,
) -> Result<RowSums> {
    let shift = if centering.on {
        let d = dist.ok_or(Error::MissingProvenance)?;
        let m2 = d.second_moment().ok_or(Error::InfiniteVariance { alpha: d.alpha.unwrap_or(f64::NAN) })?;
        z.ncols() as f64 * m2
    } else {
        0.0
    };
    let d = z.row_iter().map(|row| row.iter().map(|v| v * v).sum::<f64>() - shift).collect();
    Ok(RowSums::from_values(d, tie_seed))
}

/// `(1/p) sum_i 1 / (lambda_i - z)` for `Im z > 0`.
pub fn empirical_stieltjes(eigs: &[f64], z: Complex<f64>) -> Result<Complex<f64>> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    if eigs.is_empty() {
        return Err(Error::EmptySample);
    }
    let sum: Complex<f64> = eigs.iter().map(|&l| (Complex::new(l, 0.0) - z).inv()).sum();
    Ok(sum / eigs.len() as f64)
}
