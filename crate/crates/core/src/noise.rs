//! Regularly varying iid noise fields and the normalizing sequence `a_k`.
//!
//! Every row of a [`NoiseField`] is drawn from its own ChaCha8 stream
//! (`stream = row index`) keyed by the field seed, so the field is a pure
//! function of `(distribution, shape, seed)` no matter how rows are scheduled
//! across threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailKind {
    /// One-sided Pareto: `P(Z > x) = (x / scale)^{-alpha}` for `x >= scale`.
    Pareto,
    /// Pareto magnitude with a random sign (`+` with probability `p_plus`).
    SymmetricPareto,
    /// Student's t with `alpha` degrees of freedom, multiplied by `scale`.
    StudentT,
    /// Centered normal with standard deviation `scale`. Not heavy-tailed.
    Gaussian,
}

/// Marginal law of the noise field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailDistribution {
    pub kind: TailKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "half")]
    pub p_plus: f64,
    #[serde(default = "half")]
    pub p_minus: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

impl TailDistribution {
    pub fn pareto(alpha: f64, scale: f64) -> Self {
        Self { kind: TailKind::Pareto, alpha: Some(alpha), p_plus: 1.0, p_minus: 0.0, scale }
    }

    pub fn symmetric_pareto(alpha: f64, p_plus: f64, scale: f64) -> Self {
        Self { kind: TailKind::SymmetricPareto, alpha: Some(alpha), p_plus, p_minus: 1.0 - p_plus, scale }
    }

    /// Student's t with `nu` degrees of freedom; the tail index equals `nu`.
    pub fn student_t(nu: f64) -> Self {
        Self { kind: TailKind::StudentT, alpha: Some(nu), p_plus: 0.5, p_minus: 0.5, scale: 1.0 }
    }

    pub fn gaussian(scale: f64) -> Self {
        Self { kind: TailKind::Gaussian, alpha: None, p_plus: 0.5, p_minus: 0.5, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidDistribution(format!("scale must be positive, got {}", self.scale)));
        }
        match self.kind {
            TailKind::Gaussian => Ok(()),
            _ => {
                let alpha = self.alpha.ok_or_else(|| {
                    Error::InvalidDistribution(format!("{:?} requires a tail index alpha", self.kind))
                })?;
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidDistribution(format!("alpha must be positive, got {alpha}")));
                }
                if self.kind == TailKind::SymmetricPareto
                    && (self.p_plus < 0.0 || self.p_minus < 0.0 || (self.p_plus + self.p_minus - 1.0).abs() > 1e-12)
                {
                    return Err(Error::InvalidDistribution(format!(
                        "tail weights must be non-negative and sum to 1, got p_plus = {}, p_minus = {}",
                        self.p_plus, self.p_minus
                    )));
                }
                Ok(())
            }
        }
    }

    /// Tail index, `None` for the Gaussian.
    pub fn tail_index(&self) -> Option<f64> {
        match self.kind {
            TailKind::Gaussian => None,
            _ => self.alpha,
        }
    }

    /// Checks `alpha` lies in `(0, 4)`, the heavy-tail regime of the eigenvalue theory.
    pub fn require_heavy_tail(&self) -> Result<f64> {
        let alpha = self.tail_index().ok_or_else(|| Error::NotRegularlyVarying(format!("{:?} noise", self.kind)))?;
        if alpha <= 0.0 || alpha >= 4.0 {
            return Err(Error::TailIndexOutOfRange { alpha });
        }
        Ok(alpha)
    }

    /// `E[Z]`, or `None` when the first moment is infinite.
    pub fn mean(&self) -> Option<f64> {
        match self.kind {
            TailKind::Gaussian => Some(0.0),
            TailKind::StudentT => (self.alpha? > 1.0).then_some(0.0),
            TailKind::Pareto | TailKind::SymmetricPareto => {
                let a = self.alpha?;
                if a <= 1.0 {
                    return None;
                }
                let m = a * self.scale / (a - 1.0);
                Some(if self.kind == TailKind::Pareto { m } else { (self.p_plus - self.p_minus) * m })
            }
        }
    }

    /// `E[Z^2]`, or `None` when the second moment is infinite.
    pub fn second_moment(&self) -> Option<f64> {
        let s2 = self.scale * self.scale;
        match self.kind {
            TailKind::Gaussian => Some(s2),
            TailKind::StudentT => {
                let nu = self.alpha?;
                (nu > 2.0).then(|| s2 * nu / (nu - 2.0))
            }
            TailKind::Pareto | TailKind::SymmetricPareto => {
                let a = self.alpha?;
                (a > 2.0).then(|| a * s2 / (a - 2.0))
            }
        }
    }

    /// `P(|Z| > x)`.
    pub fn abs_survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let y = x / self.scale;
        match self.kind {
            TailKind::Pareto | TailKind::SymmetricPareto => {
                let a = self.alpha.unwrap_or(f64::NAN);
                if y <= 1.0 {
                    1.0
                } else {
                    y.powf(-a)
                }
            }
            TailKind::StudentT => {
                let nu = self.alpha.unwrap_or(f64::NAN);
                beta_reg(nu / 2.0, 0.5, nu / (nu + y * y))
            }
            TailKind::Gaussian => statrs::function::erf::erfc(y / std::f64::consts::SQRT_2),
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match self.kind {
            TailKind::Pareto => Sampler::Pareto { inv_alpha: 1.0 / self.alpha.unwrap(), scale: self.scale },
            TailKind::SymmetricPareto => Sampler::SymmetricPareto {
                inv_alpha: 1.0 / self.alpha.unwrap(),
                scale: self.scale,
                p_plus: self.p_plus,
            },
            TailKind::StudentT => Sampler::StudentT {
                dist: StudentT::new(self.alpha.unwrap()).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
                scale: self.scale,
            },
            TailKind::Gaussian => {
                Sampler::Gaussian(Normal::new(0.0, self.scale).map_err(|e| Error::InvalidDistribution(e.to_string()))?)
            }
        })
    }
}

enum Sampler {
    Pareto { inv_alpha: f64, scale: f64 },
    SymmetricPareto { inv_alpha: f64, scale: f64, p_plus: f64 },
    StudentT { dist: StudentT<f64>, scale: f64 },
    Gaussian(Normal<f64>),
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Pareto { inv_alpha, scale } => {
                // 1 - U lies in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                scale * u.powf(-inv_alpha)
            }
            Sampler::SymmetricPareto { inv_alpha, scale, p_plus } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let magnitude = scale * u.powf(-inv_alpha);
                if rng.random::<f64>() < *p_plus {
                    magnitude
                } else {
                    -magnitude
                }
            }
            Sampler::StudentT { dist, scale } => scale * dist.sample(rng),
            Sampler::Gaussian(normal) => normal.sample(rng),
        }
    }
}

/// The generator for row `row` of a field with seed `seed`.
pub fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}

/// An iid field `(Z_it)` together with the law and seed that produced it.
#[derive(Debug, Clone)]
pub struct NoiseField {
    pub values: DMatrix<f64>,
    pub dist: TailDistribution,
    pub seed: u64,
}

impl NoiseField {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

pub fn sample_noise(dist: &TailDistribution, rows: usize, cols: usize, seed: u64) -> Result<NoiseField> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimensions(format!("noise field must be non-empty, got {rows}x{cols}")));
    }
    let sampler = dist.sampler()?;
    let row_data: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let mut rng = row_rng(seed, i as u64);
            (0..cols).map(|_| sampler.draw(&mut rng)).collect()
        })
        .collect();
    let values = DMatrix::from_fn(rows, cols, |i, j| row_data[i][j]);
    Ok(NoiseField { values, dist: *dist, seed })
}

/// The `(1 - 1/k)`-quantile of `|Z|`, i.e. `a_k` with `P(|Z| > a_k) = 1/k`.
pub fn normalizing_constant(dist: &TailDistribution, k: u64) -> Result<f64> {
    dist.validate()?;
    if k < 2 {
        return Err(Error::Domain(format!("normalizing index k must be at least 2, got {k}")));
    }
    let kf = k as f64;
    match dist.kind {
        TailKind::Gaussian => Err(Error::NotRegularlyVarying("gaussian noise has no normalizing sequence".into())),
        TailKind::Pareto | TailKind::SymmetricPareto => Ok(dist.scale * kf.powf(1.0 / dist.alpha.unwrap())),
        TailKind::StudentT => {
            let target = 1.0 / kf;
            let (mut lo, mut hi) = (0.0_f64, dist.scale);
            while dist.abs_survival(hi) > target {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if dist.abs_survival(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}
