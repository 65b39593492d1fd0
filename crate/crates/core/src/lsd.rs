//! Limiting spectral distribution of `n^{-1} X X'` for light-tailed noise:
//! coefficient autocovariances, the bivariate spectral density, a grid solver
//! for the Stieltjes transform, and Marchenko-Pastur closed forms.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linear_process::FilterCoefficients;

pub type C64 = Complex<f64>;

/// `gamma_kl = sum_{u,v} h_{uv} h_{u-k,v-l}` on the difference set of the support.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffAutocovariance {
    /// Largest `|k|` with possibly nonzero `gamma_kl`.
    pub radius_k: usize,
    pub radius_l: usize,
    /// Entry `(k + radius_k, l + radius_l)` holds `gamma_kl`.
    pub values: DMatrix<f64>,
}

impl CoeffAutocovariance {
    pub fn get(&self, k: i64, l: i64) -> f64 {
        let i = k + self.radius_k as i64;
        let j = l + self.radius_l as i64;
        if i < 0 || j < 0 || i as usize >= self.values.nrows() || j as usize >= self.values.ncols() {
            return 0.0;
        }
        self.values[(i as usize, j as usize)]
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let (rk, rl) = (self.radius_k as i64, self.radius_l as i64);
        (-rk..=rk).flat_map(move |k| (-rl..=rl).map(move |l| (k as f64, l as f64, self.get(k, l))))
    }
}

pub fn coeff_autocovariance(filter: &FilterCoefficients) -> CoeffAutocovariance {
    let (r, c) = (filter.nrows(), filter.ncols());
    let h = &filter.coefficients;
    let (rk, rl) = (r - 1, c - 1);
    let mut values = DMatrix::zeros(2 * rk + 1, 2 * rl + 1);
    for a in 0..r {
        for b in 0..c {
            for a2 in 0..r {
                for b2 in 0..c {
                    // k = a - a2, l = b - b2
                    values[(a + rk - a2, b + rl - b2)] += h[a][b] * h[a2][b2];
                }
            }
        }
    }
    CoeffAutocovariance { radius_k: rk, radius_l: rl, values }
}

/// `sum_{k,l} gamma_kl e^{-2 pi i (kx + ly)}` before clipping; real by the symmetry of `gamma`.
pub fn spectral_density_unclipped(gammas: &CoeffAutocovariance, x: f64, y: f64) -> f64 {
    gammas.terms().map(|(k, l, g)| g * (2.0 * PI * (k * x + l * y)).cos()).sum()
}

/// `f(x, y)`, clipped at zero.
pub fn spectral_density(gammas: &CoeffAutocovariance, x: f64, y: f64) -> f64 {
    spectral_density_unclipped(gammas, x, y).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Number of grid points `G` on `[0, 1)`.
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Weight kept on the previous iterate.
    pub damping: f64,
    /// Take Newton steps on the grid equations and approach `z` from `Im z >= 1`.
    pub newton: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { grid: 64, tol: 1e-10, max_iter: 10_000, damping: 0.5, newton: true }
    }
}

#[derive(Debug, Clone)]
pub struct StieltjesSolution {
    pub gamma: f64,
    pub grid: usize,
    pub z: C64,
    /// `h(x_j, z)` at `x_j = j / G`.
    pub h: Vec<C64>,
    pub s: C64,
    pub iterations: usize,
    pub residual: f64,
}

/// `f` sampled on the periodic grid; the rectangle rule on it is exact for
/// trigonometric polynomials of degree below `G`.
#[derive(Debug, Clone)]
pub struct DensityGrid {
    pub f: DMatrix<f64>,
}

impl DensityGrid {
    pub fn new(filter: &FilterCoefficients, g: usize) -> Self {
        let gammas = coeff_autocovariance(filter);
        let step = 1.0 / g as f64;
        Self { f: DMatrix::from_fn(g, g, |i, j| spectral_density(&gammas, i as f64 * step, j as f64 * step)) }
    }

    fn size(&self) -> usize {
        self.f.nrows()
    }

    /// `T(h)` and the denominators `g_t = 1 + gamma int f(u, t) h(u) du`.
    fn map(&self, gamma: f64, z: C64, h: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let g = self.size();
        let w = 1.0 / g as f64;
        let denom: Vec<C64> = (0..g)
            .map(|t| C64::new(1.0, 0.0) + (0..g).map(|u| h[u] * self.f[(u, t)]).sum::<C64>() * (gamma * w))
            .collect();
        let out = (0..g).map(|x| (-z + (0..g).map(|t| self.f[(x, t)] / denom[t]).sum::<C64>() * w).inv()).collect();
        (out, denom)
    }

    /// Newton step `delta` solving `(I - dT/dh) delta = h - T(h)`.
    fn newton_step(&self, gamma: f64, h: &[C64], t: &[C64], denom: &[C64]) -> Option<Vec<C64>> {
        let g = self.size();
        let w = 1.0 / g as f64;
        let fc = self.f.map(|v| C64::new(v, 0.0));
        let mut scaled = fc.clone();
        for (s, mut col) in scaled.column_iter_mut().enumerate() {
            col *= (denom[s] * denom[s]).inv();
        }
        // dT_x/dh_u = T_x^2 gamma w^2 sum_s f(x, s) f(u, s) / g_s^2
        let mut jac = scaled * fc.transpose();
        for (x, mut row) in jac.row_iter_mut().enumerate() {
            row *= -t[x] * t[x] * (gamma * w * w);
        }
        for i in 0..g {
            jac[(i, i)] += C64::new(1.0, 0.0);
        }
        let rhs = DVector::from_iterator(g, h.iter().zip(t).map(|(a, b)| a - b));
        jac.lu().solve(&rhs).map(|d| d.iter().copied().collect())
    }
}

fn sup_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn solve_point(
    grid: &DensityGrid,
    gamma: f64,
    z: C64,
    mut h: Vec<C64>,
    opts: &SolverOptions,
    budget: &mut usize,
) -> Result<(Vec<C64>, f64)> {
    let mut residual = f64::INFINITY;
    while *budget > 0 {
        *budget -= 1;
        let (t, denom) = grid.map(gamma, z, &h);
        residual = sup_diff(&t, &h);
        if residual <= opts.tol {
            return Ok((h, residual));
        }
        if opts.newton {
            if let Some(delta) = grid.newton_step(gamma, &h, &t, &denom) {
                let cand: Vec<C64> = h.iter().zip(&delta).map(|(a, d)| a - d).collect();
                if cand.iter().all(|c| c.im > 0.0 && c.is_finite()) {
                    let (tc, _) = grid.map(gamma, z, &cand);
                    if sup_diff(&tc, &cand) < residual {
                        h = cand;
                        continue;
                    }
                }
            }
        }
        let d = opts.damping;
        h = h.iter().zip(&t).map(|(a, b)| a * d + b * (1.0 - d)).collect();
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual })
}

fn check_args(gamma: f64, z: C64) -> Result<()> {
    if !(z.im > 0.0) {
        return Err(Error::Domain(format!("Stieltjes transform needs Im z > 0, got {z}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("dimension ratio must be positive, got {gamma}")));
    }
    Ok(())
}

/// Solve on a precomputed grid.
pub fn solve_on_grid(grid: &DensityGrid, gamma: f64, z: C64, opts: &SolverOptions) -> Result<StieltjesSolution> {
    check_args(gamma, z)?;
    let g = grid.size();
    let mut budget = opts.max_iter;
    let (h, residual) = if opts.newton {
        // continuation in Im z keeps the iterate on the branch with Im h > 0
        let mut eta = z.im.max(1.0);
        let mut h = vec![-C64::new(z.re, eta).inv(); g];
        loop {
            let (next, res) = solve_point(grid, gamma, C64::new(z.re, eta), h, opts, &mut budget)?;
            h = next;
            if eta <= z.im {
                break (h, res);
            }
            eta = (eta / 3.0).max(z.im);
        }
    } else {
        solve_point(grid, gamma, z, vec![-z.inv(); g], opts, &mut budget)?
    };
    let s = h.iter().sum::<C64>() / g as f64;
    if !(s.im > 0.0) {
        return Err(Error::Domain(format!("solver left the upper half plane at z = {z}: s = {s}")));
    }
    Ok(StieltjesSolution { gamma, grid: g, z, h, s, iterations: opts.max_iter - budget, residual })
}

pub fn solve_stieltjes(
    filter: &FilterCoefficients,
    gamma: f64,
    z: C64,
    opts: &SolverOptions,
) -> Result<StieltjesSolution> {
    check_args(gamma, z)?;
    solve_on_grid(&DensityGrid::new(filter, opts.grid), gamma, z, opts)
}

/// Solutions at `x + i eps` for each `x`, solved in parallel.
pub fn stieltjes_path(
    filter: &FilterCoefficients,
    gamma: f64,
    xs: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<Vec<StieltjesSolution>> {
    let grid = DensityGrid::new(filter, opts.grid);
    xs.par_iter().map(|&x| solve_on_grid(&grid, gamma, C64::new(x, eps), opts)).collect()
}

/// `pi^{-1} Im s(x + i eps)` per solution.
pub fn density_from_stieltjes(solutions: &[StieltjesSolution]) -> Vec<f64> {
    solutions.iter().map(|s| s.s.im / PI).collect()
}

/// Edges `a = (1 - sqrt(gamma))^2`, `b = (1 + sqrt(gamma))^2` of the bulk.
pub fn mp_support(gamma: f64) -> (f64, f64) {
    let r = gamma.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Marchenko-Pastur Stieltjes transform; the root with `Im s > 0` is returned.
pub fn mp_stieltjes(gamma: f64, z: C64) -> Result<C64> {
    check_args(gamma, z)?;
    let disc = ((1.0 + gamma - z) * (1.0 + gamma - z) - 4.0 * gamma).sqrt();
    let base = 1.0 - gamma - z;
    let denom = 2.0 * gamma * z;
    let (s1, s2) = ((base + disc) / denom, (base - disc) / denom);
    Ok(if s1.im >= s2.im { s1 } else { s2 })
}

/// Density of the absolutely continuous part.
pub fn mp_density(gamma: f64, x: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("dimension ratio must be positive, got {gamma}")));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!("density needs x >= 0, got {x}")));
    }
    let (a, b) = mp_support(gamma);
    if x < a || x > b {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(((b - x) * (x - a)).max(0.0).sqrt() / (2.0 * PI * x * gamma))
}

/// Mass `1 - 1/gamma` at zero when `gamma > 1`.
pub fn mp_point_mass(gamma: f64) -> f64 {
    (1.0 - 1.0 / gamma).max(0.0)
}

/// Distribution function of the law, point mass included.
pub fn mp_cdf(gamma: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let (a, b) = mp_support(gamma);
    let atom = mp_point_mass(gamma);
    if x <= a {
        return atom;
    }
    if x >= b {
        return 1.0;
    }
    // x = m - r cos(theta) removes the square-root endpoints
    let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
    let theta_x = ((m - x) / r).clamp(-1.0, 1.0).acos();
    let integrand = |t: f64| {
        let (s, c) = t.sin_cos();
        if gamma == 1.0 {
            r * (1.0 + c) / (2.0 * PI * gamma)
        } else {
            r * r * s * s / (2.0 * PI * gamma * (m - r * c))
        }
    };
    let steps = 2048;
    let hstep = theta_x / steps as f64;
    let mut acc = integrand(0.0) + integrand(theta_x);
    for i in 1..steps {
        acc += integrand(i as f64 * hstep) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (atom + acc * hstep / 3.0).min(1.0)
}
