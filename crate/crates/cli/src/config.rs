//! Experiment configuration, read from TOML.
//!
//! ```toml
//! kind = "compare"          # spectrum | predict | compare | limits | lsd
//! p = 500
//! n = 5000
//! s1 = 1
//! s2 = 1
//! seeds = [1, 2, 3]
//!
//! [filter]                  # either `coefficients` or the separable `d` and `c`
//! d = [2.0, 1.0, -1.0]
//! c = [1.0, 1.0, 1.0]
//!
//! [noise]
//! kind = "student_t"
//! alpha = 1.5
//! ```

use std::path::{Path, PathBuf};

use heavycov::autocovariance::{CenteringMode, CenteringPolicy};
use heavycov::filter_spectrum::KernelKind;
use heavycov::linear_process::FilterCoefficients;
use heavycov::lsd::SolverOptions;
use heavycov::noise::TailDistribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Version of the default pass/fail thresholds written into every output header.
pub const THRESHOLDS_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Spectrum,
    Predict,
    Compare,
    Limits,
    Lsd,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Predict => "predict",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Limits => "limits",
            ExperimentKind::Lsd => "lsd",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default)]
    pub row_offset: i64,
    #[serde(default)]
    pub col_offset: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
}

impl FilterSpec {
    pub fn build(&self) -> Result<FilterCoefficients, CliError> {
        let mut f = match (&self.coefficients, &self.d, &self.c) {
            (Some(h), None, None) => FilterCoefficients::new(0, 0, h.clone())?,
            (None, Some(d), Some(c)) => FilterCoefficients::separable(d, c)?,
            _ => return Err(CliError::Config("[filter] needs either `coefficients` or both `d` and `c`".into())),
        };
        f.row_offset = self.row_offset;
        f.col_offset = self.col_offset;
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsSection {
    /// Number of consecutive eigenvalue ratios examined.
    pub kmax: usize,
    /// Draws from each simulated limit law.
    pub reps: usize,
    /// Terms kept in the stable series.
    pub truncation: usize,
    /// Seed of the limit-law simulations.
    pub seed: u64,
    /// Pass threshold for the KS distance to the Fréchet law.
    pub frechet_threshold: f64,
    /// Level of the two-sample KS comparisons.
    pub level: f64,
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            kmax: 3,
            reps: 10_000,
            truncation: heavycov::limits::DEFAULT_TRUNCATION,
            seed: 0,
            frechet_threshold: 0.15,
            level: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsdSection {
    pub grid: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub newton: bool,
    /// Distance of the evaluation line above the real axis.
    pub eps: f64,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
}

impl Default for LsdSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            grid: o.grid,
            tol: o.tol,
            max_iter: o.max_iter,
            damping: o.damping,
            newton: o.newton,
            eps: 1e-3,
            points: 200,
            x_min: None,
            x_max: None,
        }
    }
}

impl LsdSection {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            grid: self.grid,
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            newton: self.newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Allowed distance of `lambda_1(s1, s2) / lambda_1(0, 0)` from its prediction.
    pub ratio_tol: f64,
    /// Required alignment of the leading eigenvectors with their predictions.
    pub alignment: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { ratio_tol: 0.05, alignment: 0.99 }
    }
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub s1: usize,
    #[serde(default)]
    pub s2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    #[serde(default)]
    pub centering: CenteringMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_hint: Option<f64>,
    #[serde(default = "power")]
    pub matrix: KernelKind,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Number of predicted eigenvectors; defaults to `floor(p^{1/4})`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Number of leading eigenvalues reported.
    #[serde(default = "ten")]
    pub top: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// `p x (n + s_max)` observation matrix for `spectrum`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<TailDistribution>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub limits: LimitsSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub lsd: LsdSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub thresholds: Thresholds,
}

fn power() -> KernelKind {
    KernelKind::Power
}

fn ten() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn kind(&self) -> Result<ExperimentKind, CliError> {
        self.kind.ok_or_else(|| CliError::Config("missing `kind`".into()))
    }

    pub fn centering_policy(&self) -> CenteringPolicy {
        CenteringPolicy { mode: self.centering, beta_hint: self.beta_hint }
    }

    pub fn s_max(&self) -> usize {
        self.s_max.unwrap_or(self.s2)
    }

    fn require<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
        v.ok_or_else(|| CliError::Config(format!("missing `{key}`")))
    }

    pub fn dims(&self) -> Result<(usize, usize), CliError> {
        Ok((Self::require(self.p, "p")?, Self::require(self.n, "n")?))
    }

    pub fn filter(&self) -> Result<FilterCoefficients, CliError> {
        self.filter.as_ref().ok_or_else(|| CliError::Config("missing [filter] section".into()))?.build()
    }

    pub fn dist(&self) -> Result<TailDistribution, CliError> {
        let d = self.noise.ok_or_else(|| CliError::Config("missing [noise] section".into()))?;
        d.validate()?;
        Ok(d)
    }

    /// Checks every parameter the chosen kind reads.
    pub fn validate(&self) -> Result<(), CliError> {
        let kind = self.kind()?;
        if self.s1 > self.s2 {
            return Err(heavycov::Error::InvalidLagRange { s1: self.s1, s2: self.s2 }.into());
        }
        if self.s_max() < self.s2 {
            return Err(CliError::Config(format!("s_max = {} is below s2 = {}", self.s_max(), self.s2)));
        }
        if self.seeds.is_empty() && !(kind == ExperimentKind::Spectrum && self.input.is_some()) {
            return Err(CliError::Config("empty replication set".into()));
        }
        if self.top == 0 {
            return Err(CliError::Config("`top` must be at least 1".into()));
        }
        if self.input.is_some() && kind != ExperimentKind::Spectrum {
            return Err(CliError::Config("`input` is only read by `spectrum`".into()));
        }
        if kind == ExperimentKind::Spectrum && self.input.is_some() {
            return Ok(());
        }
        let (p, n) = self.dims()?;
        if p == 0 || n == 0 {
            return Err(CliError::Config("`p` and `n` must be positive".into()));
        }
        self.filter()?;
        let dist = self.dist()?;
        match kind {
            ExperimentKind::Spectrum => {}
            ExperimentKind::Predict | ExperimentKind::Compare | ExperimentKind::Limits => {
                dist.require_heavy_tail()?;
                if n * p < 2 {
                    return Err(CliError::Config("need n * p >= 2 for the normalizing constant".into()));
                }
                if kind == ExperimentKind::Limits {
                    let l = &self.limits;
                    if l.kmax == 0 || l.reps == 0 || l.truncation == 0 {
                        return Err(CliError::Config("[limits] kmax, reps and truncation must be positive".into()));
                    }
                    if l.kmax >= p {
                        return Err(CliError::Config(format!("[limits] kmax = {} must be below p = {p}", l.kmax)));
                    }
                }
            }
            ExperimentKind::Lsd => {
                let m1 = dist.mean();
                let m2 = dist.second_moment();
                if m1.is_none_or(|m| m.abs() > 1e-12) || m2.is_none_or(|m| (m - 1.0).abs() > 1e-12) {
                    return Err(CliError::Config("lsd needs noise with mean 0 and variance 1".into()));
                }
                let l = &self.lsd;
                if l.points < 2 || !(l.eps > 0.0) || l.grid == 0 {
                    return Err(CliError::Config("[lsd] needs points >= 2, eps > 0 and grid >= 1".into()));
                }
            }
        }
        Ok(())
    }
}
