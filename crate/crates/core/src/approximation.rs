//! Order-statistic approximations `gamma_i` / `delta_i` to the largest
//! eigenvalues, the localized eigenvectors they predict, the block-diagonal
//! surrogate matrix, and comparison metrics.

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::autocovariance::RowSums;
use crate::error::{Error, Result};
use crate::filter_spectrum::{embed_vector, KSpectrum, KernelKind};

/// Which pair generated an approximating value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    /// `a(i)`: 0-based noise row.
    pub row: usize,
    /// `b(i)`: 0-based index of the K-eigenvalue.
    pub component: usize,
}

/// Ordered approximating values with their labels.
#[derive(Debug, Clone)]
pub struct ApproxSpectrum {
    pub kind: KernelKind,
    pub values: Vec<f64>,
    pub labels: Vec<Label>,
}

impl ApproxSpectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Largest `count` products `w_i * v_j` where the `w_i` are already sorted
/// descending; ties fall to the smaller `i`, then the smaller `j`.
fn top_products(weights: &[f64], rows: &[usize], kvals: &[f64], count: usize) -> (Vec<f64>, Vec<Label>) {
    let mut items: Vec<(f64, usize, usize)> = Vec::with_capacity(weights.len() * kvals.len());
    for (i, &w) in weights.iter().enumerate() {
        for (j, &v) in kvals.iter().enumerate() {
            items.push((w * v, i, j));
        }
    }
    items.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    items.truncate(count);
    let values = items.iter().map(|t| t.0).collect();
    let labels = items.iter().map(|&(_, i, j)| Label { row: rows[i], component: j }).collect();
    (values, labels)
}

/// `gamma_1 >= ... >= gamma_count` from `{D_i^2 v_j^2}` (or `{|D_i| v~_j}` for `A`).
pub fn gamma_values(rowsums: &RowSums, kspec: &KSpectrum, count: usize) -> ApproxSpectrum {
    let weights: Vec<f64> = rowsums.order.iter().map(|&r| kspec.kind.row_weight(rowsums.d[r])).collect();
    let (values, labels) = top_products(&weights, &rowsums.order, kspec.positive_values(), count);
    ApproxSpectrum { kind: kspec.kind, values, labels }
}

/// `delta_1 >= ... >= delta_count` from `{Z_(i),np^4 v_j^2}` over the whole
/// `p x n` field (or `{Z_(i),np^2 v~_j}` for `A`).
pub fn delta_values(z: DMatrixView<'_, f64>, kspec: &KSpectrum, count: usize) -> ApproxSpectrum {
    let nrows = z.nrows();
    let mut entries: Vec<(f64, usize)> = z.iter().enumerate().map(|(idx, &v)| (v * v, idx % nrows)).collect();
    let take = count.min(entries.len());
    if take < entries.len() {
        entries.select_nth_unstable_by(take, |a, b| b.0.total_cmp(&a.0));
        entries.truncate(take);
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let weights: Vec<f64> = entries.iter().map(|e| kspec.kind.entry_weight(e.0.sqrt())).collect();
    let rows: Vec<usize> = entries.iter().map(|e| e.1).collect();
    let (values, labels) = top_products(&weights, &rows, kspec.positive_values(), count);
    ApproxSpectrum { kind: kspec.kind, values, labels }
}

/// Predicted unit eigenvectors `u_{b(i)}^{a(i)}` for the `k` leading approximations.
pub fn predicted_eigenvectors(
    approx: &ApproxSpectrum,
    kspec: &KSpectrum,
    p: usize,
    k: usize,
) -> Result<Vec<DVector<f64>>> {
    kspec.check_no_ties()?;
    Ok(approx
        .labels
        .iter()
        .take(k)
        .map(|lab| {
            let u = kspec.vectors.column(lab.component);
            embed_vector(u.as_slice(), lab.row as i64 + kspec.row_offset, p)
        })
        .collect())
}

/// `floor(p^{1/4})`, at least 1: a block count with `k^2 = o(p)`.
pub fn default_block_count(p: usize) -> usize {
    let mut k = (p as f64).powf(0.25).floor() as usize;
    while (k + 1).pow(4) <= p {
        k += 1;
    }
    while k > 0 && k.pow(4) > p {
        k -= 1;
    }
    k.max(1)
}

fn add_embedded(out: &mut DMatrix<f64>, block: &DMatrix<f64>, start: i64, scale: f64) {
    let p = out.nrows() as i64;
    let b = block.nrows();
    for j in 0..b {
        let gj = start + j as i64;
        if gj < 0 || gj >= p {
            continue;
        }
        for i in 0..b {
            let gi = start + i as i64;
            if gi < 0 || gi >= p {
                continue;
            }
            out[(gi as usize, gj as usize)] += scale * block[(i, j)];
        }
    }
}

/// `sum_{i<k} D_(i)^2 K_{L_i}` (for `A`: `sum_{i<k} D_(i) K~_{L_i}`). Overlapping blocks add.
pub fn block_approximation(rowsums: &RowSums, kspec: &KSpectrum, p: usize, k: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(p, p);
    for &row in rowsums.order.iter().take(k) {
        let d = rowsums.d[row];
        let scale = match kspec.kind {
            KernelKind::Power => d * d,
            KernelKind::Symmetrized => d,
        };
        add_embedded(&mut out, &kspec.block, row as i64 + kspec.row_offset, scale);
    }
    out
}

/// Whether the `k` leading blocks are pairwise separated and fully inside `0..p`
/// (the event on which the block approximation is exactly block diagonal).
pub fn blocks_separated(rowsums: &RowSums, kspec: &KSpectrum, p: usize, k: usize) -> bool {
    let b = kspec.dim() as i64;
    let starts: Vec<i64> = rowsums.order.iter().take(k).map(|&r| r as i64 + kspec.row_offset).collect();
    let interior = starts.iter().all(|&s| s >= 0 && s + b <= p as i64);
    let apart = starts.iter().enumerate().all(|(i, a)| starts[i + 1..].iter().all(|c| (a - c).abs() > b));
    interior && apart
}

/// `a_np^{-4} max_i |lambda_i - gamma_i|` (`a_np^{-2}` for singular values of `A`).
pub fn approximation_error(lambda: &[f64], approx: &ApproxSpectrum, a_np: f64) -> Result<f64> {
    if lambda.len() != approx.len() {
        return Err(Error::LengthMismatch { left: lambda.len(), right: approx.len() });
    }
    let worst = lambda.iter().zip(&approx.values).map(|(l, g)| (l - g).abs()).fold(0.0, f64::max);
    Ok(worst / a_np.powi(approx.kind.norm_power()))
}

/// `|<y, u>|` for unit vectors.
pub fn alignment(y: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    if y.len() != u.len() {
        return Err(Error::LengthMismatch { left: y.len(), right: u.len() });
    }
    for v in [y, u] {
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::NotUnitNorm { norm });
        }
    }
    Ok(y.dot(u).abs().min(1.0))
}
