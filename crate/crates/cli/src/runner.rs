//! Experiment drivers. Each writes CSV tables and a `summary.json` into the
//! output directory; every file starts with the same header block.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use heavycov::approximation::{
    alignment, approximation_error, blocks_separated, default_block_count, delta_values, gamma_values,
    predicted_eigenvectors, ApproxSpectrum,
};
use heavycov::autocovariance::{
    row_sum_squares, symmetric_eigen, symmetric_eigenvalues, Centering, CenteringPolicy, LaggedCovariances,
    SpectralResult,
};
use heavycov::filter_spectrum::{build_k, build_k_sym, KSpectrum, KSpectrumRecord, KernelKind, DEFAULT_RANK_TOL};
use heavycov::io::{read_matrix_csv, write_matrix_csv, write_spectrum_csv, write_table, Preamble};
use heavycov::limits::{
    frechet_cdf, ks_critical_value, ks_distance, ks_two_sample, limit_point_ratio_sample, ratio_statistics,
    trace_limit_sample, TestRecord,
};
use heavycov::linear_process::{generate_process, DataMatrix, FilterCoefficients};
use heavycov::lsd::{density_from_stieltjes, mp_cdf, mp_density, mp_support, stieltjes_path, StieltjesSolution};
use heavycov::noise::{normalizing_constant, TailDistribution};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, THRESHOLDS_VERSION};
use crate::CliError;

/// Identifies the run that produced a file.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub thresholds_version: &'static str,
    pub version: &'static str,
}

struct Output {
    dir: PathBuf,
    hash: String,
    seeds: Vec<u64>,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hash: cfg.hash(), seeds: cfg.seeds.clone(), written: Vec::new() })
    }

    fn preamble(&self, seed: Option<u64>) -> Preamble {
        let seed = match seed {
            Some(s) => s.to_string(),
            None => self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "),
        };
        vec![
            ("config_sha256".into(), self.hash.clone()),
            ("seed".into(), seed),
            ("thresholds_version".into(), THRESHOLDS_VERSION.into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ]
    }

    fn header(&self) -> Header {
        Header {
            config_sha256: self.hash.clone(),
            seeds: self.seeds.clone(),
            thresholds_version: THRESHOLDS_VERSION,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    fn table(
        &mut self,
        name: &str,
        seed: Option<u64>,
        header: &[&str],
        rows: Vec<Vec<String>>,
    ) -> Result<(), CliError> {
        let pre = self.preamble(seed);
        let w = self.create(name)?;
        write_table(w, &pre, header, rows)?;
        Ok(())
    }

    fn matrix(&mut self, name: &str, seed: Option<u64>, m: &DMatrix<f64>) -> Result<(), CliError> {
        let pre = self.preamble(seed);
        let w = self.create(name)?;
        write_matrix_csv(w, m, &pre)?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            header: Header,
            #[serde(flatten)]
            body: &'a T,
        }
        let doc = Doc { header: self.header(), body };
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Config(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn config(&mut self, cfg: &ExperimentConfig) -> Result<(), CliError> {
        let mut w = self.create("config.toml")?;
        w.write_all(cfg.to_toml().as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Parameters shared by the simulation-based experiments.
struct Model {
    filter: FilterCoefficients,
    dist: TailDistribution,
    p: usize,
    n: usize,
    s1: usize,
    s2: usize,
    s_max: usize,
    policy: CenteringPolicy,
    kind: KernelKind,
    k: usize,
    top: usize,
}

impl Model {
    fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let (p, n) = cfg.dims()?;
        Ok(Self {
            filter: cfg.filter()?,
            dist: cfg.dist()?,
            p,
            n,
            s1: cfg.s1,
            s2: cfg.s2,
            s_max: cfg.s_max(),
            policy: cfg.centering_policy(),
            kind: cfg.matrix,
            k: cfg.k.unwrap_or_else(|| default_block_count(p)).min(p),
            top: cfg.top.min(p),
        })
    }

    fn kspec(&self, s1: usize, s2: usize) -> Result<KSpectrum, CliError> {
        Ok(match self.kind {
            KernelKind::Power => build_k(&self.filter, s1, s2, DEFAULT_RANK_TOL)?,
            KernelKind::Symmetrized => build_k_sym(&self.filter, s1, s2, DEFAULT_RANK_TOL)?,
        })
    }

    fn simulate(&self, seed: u64) -> Result<(DataMatrix, LaggedCovariances), CliError> {
        let x = generate_process(&self.filter, &self.dist, self.p, self.n, self.s_max, seed)?;
        let covs = LaggedCovariances::compute(&x, self.s2, &self.policy)?;
        Ok((x, covs))
    }

    fn a_np(&self) -> Result<f64, CliError> {
        Ok(normalizing_constant(&self.dist, (self.n * self.p) as u64)?)
    }

    fn scale(&self) -> Result<f64, CliError> {
        Ok(self.a_np()?.powi(self.kind.norm_power()))
    }
}

fn sample_matrix(kind: KernelKind, covs: &LaggedCovariances, s1: usize, s2: usize) -> Result<DMatrix<f64>, CliError> {
    Ok(match kind {
        KernelKind::Power => covs.power_sum(s1, s2)?,
        KernelKind::Symmetrized => covs.symmetrized_sum(s1, s2)?,
    })
}

/// Eigenpairs ordered as the predictions are: eigenvalues of `P`, singular values of `A`.
fn spectrum(kind: KernelKind, m: &DMatrix<f64>) -> Result<SpectralResult, CliError> {
    let e = symmetric_eigen(m)?;
    Ok(match kind {
        KernelKind::Power => e,
        KernelKind::Symmetrized => e.by_magnitude(),
    })
}

fn eigenvalues(kind: KernelKind, m: &DMatrix<f64>) -> Result<Vec<f64>, CliError> {
    let mut v = symmetric_eigenvalues(m)?;
    if kind == KernelKind::Symmetrized {
        v.iter_mut().for_each(|x| *x = x.abs());
        v.sort_by(|a, b| b.total_cmp(a));
    }
    Ok(v)
}

fn top_vectors(eig: &SpectralResult, k: usize) -> DMatrix<f64> {
    eig.vectors.columns(0, k.min(eig.vectors.ncols())).into_owned()
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let mut o = Output::new(out, cfg)?;
    o.config(cfg)?;
    match cfg.kind()? {
        ExperimentKind::Spectrum => run_spectrum(cfg, &mut o)?,
        ExperimentKind::Predict => run_predict(cfg, &mut o)?,
        ExperimentKind::Compare => run_compare(cfg, &mut o)?,
        ExperimentKind::Limits => run_limits(cfg, &mut o)?,
        ExperimentKind::Lsd => run_lsd(cfg, &mut o)?,
    }
    Ok(o.written)
}

#[derive(Serialize)]
struct SpectrumSeed {
    seed: Option<u64>,
    centering: Centering,
    top_eigenvalues: Vec<f64>,
}

#[derive(Serialize)]
struct SpectrumSummary {
    kind: &'static str,
    matrix: KernelKind,
    lags: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<KSpectrumRecord>,
    runs: Vec<SpectrumSeed>,
}

fn run_spectrum(cfg: &ExperimentConfig, o: &mut Output) -> Result<(), CliError> {
    let kind = cfg.matrix;
    let policy = cfg.centering_policy();
    if let Some(path) = &cfg.input {
        let values = read_matrix_csv(File::open(path)?)?;
        let s_max = cfg.s_max();
        if values.ncols() <= s_max {
            return Err(CliError::Config(format!(
                "input has {} columns, need more than s_max = {s_max}",
                values.ncols()
            )));
        }
        let n = values.ncols() - s_max;
        let x = DataMatrix::from_observations(values, n)?;
        let covs = LaggedCovariances::compute(&x, cfg.s2, &policy)?;
        let eig = spectrum(kind, &sample_matrix(kind, &covs, cfg.s1, cfg.s2)?)?;
        let k = cfg.k.unwrap_or_else(|| default_block_count(x.p)).min(x.p);
        let pre = o.preamble(None);
        write_spectrum_csv(o.create("spectrum_input.csv")?, &eig.values, &pre)?;
        o.matrix("vectors_input.csv", None, &top_vectors(&eig, k))?;
        let summary = SpectrumSummary {
            kind: "spectrum",
            matrix: kind,
            lags: [cfg.s1, cfg.s2],
            kernel: None,
            runs: vec![SpectrumSeed {
                seed: None,
                centering: covs.centering,
                top_eigenvalues: eig.values.iter().take(cfg.top).copied().collect(),
            }],
        };
        return o.json("summary.json", &summary);
    }

    let model = Model::new(cfg)?;
    let kernel = model.kspec(model.s1, model.s2).ok().map(|k| k.record());
    let results: Vec<(SpectralResult, Centering)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (_, covs) = model.simulate(seed)?;
            Ok((spectrum(kind, &sample_matrix(kind, &covs, model.s1, model.s2)?)?, covs.centering))
        })
        .collect::<Result<_, CliError>>()?;
    let mut runs = Vec::new();
    for (&seed, (eig, centering)) in cfg.seeds.iter().zip(&results) {
        let pre = o.preamble(Some(seed));
        write_spectrum_csv(o.create(&format!("spectrum_seed{seed}.csv"))?, &eig.values, &pre)?;
        o.matrix(&format!("vectors_seed{seed}.csv"), Some(seed), &top_vectors(eig, model.k))?;
        runs.push(SpectrumSeed {
            seed: Some(seed),
            centering: *centering,
            top_eigenvalues: eig.values.iter().take(model.top).copied().collect(),
        });
    }
    o.json(
        "summary.json",
        &SpectrumSummary { kind: "spectrum", matrix: kind, lags: [model.s1, model.s2], kernel, runs },
    )
}

fn label_columns(approx: &ApproxSpectrum, i: usize) -> [String; 2] {
    match approx.labels.get(i) {
        Some(l) => [(l.row + 1).to_string(), (l.component + 1).to_string()],
        None => [String::new(), String::new()],
    }
}

fn value_at(v: &[f64], i: usize) -> String {
    v.get(i).map(|x| f(*x)).unwrap_or_default()
}

#[derive(Serialize)]
struct PredictSeed {
    seed: u64,
    centering: Centering,
    leading_rows: Vec<usize>,
    blocks_separated: bool,
}

#[derive(Serialize)]
struct PredictSummary {
    kind: &'static str,
    matrix: KernelKind,
    lags: [usize; 2],
    a_np: f64,
    k: usize,
    kernel: KSpectrumRecord,
    runs: Vec<PredictSeed>,
}

fn run_predict(cfg: &ExperimentConfig, o: &mut Output) -> Result<(), CliError> {
    let model = Model::new(cfg)?;
    let kspec = model.kspec(model.s1, model.s2)?;
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (x, covs) = model.simulate(seed)?;
            let z = x.noise_view().expect("simulated data carries its noise");
            let rows = row_sum_squares(z, &covs.centering, Some(&model.dist), seed)?;
            let gamma = gamma_values(&rows, &kspec, model.top);
            let delta = delta_values(z, &kspec, model.top);
            let preds = predicted_eigenvectors(&gamma, &kspec, model.p, model.k).ok();
            let sep = blocks_separated(&rows, &kspec, model.p, model.k);
            let leading = rows.order.iter().take(model.k).map(|r| r + 1).collect();
            Ok((
                gamma,
                delta,
                preds,
                PredictSeed { seed, centering: covs.centering, leading_rows: leading, blocks_separated: sep },
            ))
        })
        .collect::<Result<_, CliError>>()?;
    let mut runs = Vec::new();
    for (gamma, delta, preds, info) in results {
        let seed = info.seed;
        let rows = (0..model.top)
            .map(|i| {
                let [a, b] = label_columns(&gamma, i);
                vec![(i + 1).to_string(), value_at(&gamma.values, i), value_at(&delta.values, i), a, b]
            })
            .collect();
        o.table(&format!("predict_seed{seed}.csv"), Some(seed), &["i", "gamma", "delta", "a", "b"], rows)?;
        if let Some(p) = preds {
            let m = DMatrix::from_columns(&p);
            o.matrix(&format!("predicted_vectors_seed{seed}.csv"), Some(seed), &m)?;
        }
        runs.push(info);
    }
    let summary = PredictSummary {
        kind: "predict",
        matrix: model.kind,
        lags: [model.s1, model.s2],
        a_np: model.a_np()?,
        k: model.k,
        kernel: kspec.record(),
        runs,
    };
    o.json("summary.json", &summary)
}

#[derive(Serialize)]
struct CompareSeed {
    seed: u64,
    lambda1: f64,
    lambda1_baseline: f64,
    ratio: f64,
    error: f64,
    min_alignment: Option<f64>,
    /// Leading predictions cut off at the boundary.
    clipped: usize,
    blocks_separated: bool,
    centering: Centering,
}

#[derive(Serialize)]
struct CompareMedians {
    ratio: f64,
    error: f64,
    min_alignment: Option<f64>,
}

#[derive(Serialize)]
struct CompareChecks {
    ratio: TestRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    alignment: Option<TestRecord>,
}

#[derive(Serialize)]
struct CompareSummary {
    kind: &'static str,
    matrix: KernelKind,
    lags: [usize; 2],
    a_np: f64,
    k: usize,
    top: usize,
    kernel: KSpectrumRecord,
    predicted_ratio: f64,
    runs: Vec<CompareSeed>,
    medians: CompareMedians,
    checks: CompareChecks,
}

fn run_compare(cfg: &ExperimentConfig, o: &mut Output) -> Result<(), CliError> {
    let model = Model::new(cfg)?;
    let kspec = model.kspec(model.s1, model.s2)?;
    let base = model.kspec(0, 0)?;
    let predicted_ratio = kspec.values[0] / base.values[0];
    let identifiable = kspec.check_no_ties().is_ok();
    let a_np = model.a_np()?;
    let results: Vec<_> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (x, covs) = model.simulate(seed)?;
            let eig = spectrum(model.kind, &sample_matrix(model.kind, &covs, model.s1, model.s2)?)?;
            let lambda1_baseline = if (model.s1, model.s2) == (0, 0) {
                eig.values[0]
            } else {
                eigenvalues(model.kind, &sample_matrix(model.kind, &covs, 0, 0)?)?[0]
            };
            let z = x.noise_view().expect("simulated data carries its noise");
            let rows = row_sum_squares(z, &covs.centering, Some(&model.dist), seed)?;
            let gamma = gamma_values(&rows, &kspec, model.top);
            let delta = delta_values(z, &kspec, model.top);
            // predictions clipped at the boundary are not unit vectors and get no alignment
            let align: Vec<Option<f64>> = if identifiable {
                predicted_eigenvectors(&gamma, &kspec, model.p, model.top)?
                    .iter()
                    .enumerate()
                    .map(|(i, u)| alignment(&eig.vector(i), u).ok())
                    .collect()
            } else {
                Vec::new()
            };
            let lambda: Vec<f64> = eig.values.iter().take(gamma.len()).copied().collect();
            let error = approximation_error(&lambda, &gamma, a_np)?;
            let min_alignment = align.iter().take(model.k).flatten().copied().reduce(f64::min);
            let clipped = align.iter().take(model.k).filter(|a| a.is_none()).count();
            let info = CompareSeed {
                seed,
                lambda1: eig.values[0],
                lambda1_baseline,
                ratio: eig.values[0] / lambda1_baseline,
                error,
                min_alignment,
                clipped,
                blocks_separated: blocks_separated(&rows, &kspec, model.p, model.k),
                centering: covs.centering,
            };
            Ok((eig.values.iter().take(model.top).copied().collect::<Vec<_>>(), gamma, delta, align, info))
        })
        .collect::<Result<_, CliError>>()?;

    let mut runs = Vec::new();
    for (lambda, gamma, delta, align, info) in results {
        let seed = info.seed;
        let rows = (0..model.top)
            .map(|i| {
                let [a, b] = label_columns(&gamma, i);
                vec![
                    (i + 1).to_string(),
                    value_at(&lambda, i),
                    value_at(&gamma.values, i),
                    value_at(&delta.values, i),
                    a,
                    b,
                    align.get(i).copied().flatten().map(f).unwrap_or_default(),
                ]
            })
            .collect();
        o.table(
            &format!("compare_seed{seed}.csv"),
            Some(seed),
            &["i", "lambda", "gamma", "delta", "a", "b", "alignment"],
            rows,
        )?;
        runs.push(info);
    }
    let ratios: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
    let errors: Vec<f64> = runs.iter().map(|r| r.error).collect();
    let aligns: Vec<f64> = runs.iter().filter_map(|r| r.min_alignment).collect();
    let medians = CompareMedians {
        ratio: median(&ratios),
        error: median(&errors),
        min_alignment: (!aligns.is_empty()).then(|| median(&aligns)),
    };
    let checks = CompareChecks {
        ratio: TestRecord::below((medians.ratio - predicted_ratio).abs(), cfg.thresholds.ratio_tol),
        alignment: medians.min_alignment.map(|a| TestRecord::above(a, cfg.thresholds.alignment)),
    };
    let summary = CompareSummary {
        kind: "compare",
        matrix: model.kind,
        lags: [model.s1, model.s2],
        a_np,
        k: model.k,
        top: model.top,
        kernel: kspec.record(),
        predicted_ratio,
        runs,
        medians,
        checks,
    };
    o.json("summary.json", &summary)
}

#[derive(Serialize)]
struct LimitsChecks {
    frechet: TestRecord,
    ratios: Vec<TestRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    self_normalized: Option<TestRecord>,
}

#[derive(Serialize)]
struct LimitsSummary {
    kind: &'static str,
    matrix: KernelKind,
    lags: [usize; 2],
    alpha: f64,
    a_np: f64,
    kernel: KSpectrumRecord,
    argmin_frequencies: Vec<f64>,
    limit_argmin_frequencies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_tail_bound: Option<f64>,
    checks: LimitsChecks,
}

fn argmin_frequencies(ratios: &[Vec<f64>], kmax: usize) -> Vec<f64> {
    let mut counts = vec![0.0; kmax];
    for r in ratios {
        let mut idx = 0;
        for (i, v) in r.iter().enumerate() {
            if *v < r[idx] {
                idx = i;
            }
        }
        counts[idx] += 1.0;
    }
    let total = ratios.len().max(1) as f64;
    counts.into_iter().map(|c| c / total).collect()
}

fn run_limits(cfg: &ExperimentConfig, o: &mut Output) -> Result<(), CliError> {
    let model = Model::new(cfg)?;
    let lim = &cfg.limits;
    let alpha = model.dist.require_heavy_tail()?;
    let kspec = model.kspec(model.s1, model.s2)?;
    let scale = model.scale()?;
    let kmax = lim.kmax;

    struct SeedStats {
        normalized: f64,
        ratios: Vec<f64>,
        argmin: usize,
        self_normalized: f64,
    }
    let stats: Vec<SeedStats> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (_, covs) = model.simulate(seed)?;
            let vals = eigenvalues(model.kind, &sample_matrix(model.kind, &covs, model.s1, model.s2)?)?;
            let rs = ratio_statistics(&vals, kmax)?;
            let trace: f64 = vals.iter().sum();
            Ok(SeedStats {
                normalized: vals[0] / scale,
                ratios: rs.ratios,
                argmin: rs.argmin,
                self_normalized: vals[0] / trace,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let w1 = kspec.values[0];
    let cdf = |x: f64| -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match model.kind {
            KernelKind::Power => frechet_cdf(x, alpha, w1).unwrap_or(0.0),
            // w1 Gamma^{-2/alpha} <= x  iff  w1^2 Gamma^{-4/alpha} <= x^2
            KernelKind::Symmetrized => frechet_cdf(x * x, alpha, w1 * w1).unwrap_or(0.0),
        }
    };
    let normalized: Vec<f64> = stats.iter().map(|s| s.normalized).collect();
    let frechet = TestRecord::below(ks_distance(&normalized, cdf)?, lim.frechet_threshold);

    let limit_ratios = limit_point_ratio_sample(&kspec, kmax, alpha, lim.seed, lim.reps)?;
    let seed_ratios: Vec<Vec<f64>> = stats.iter().map(|s| s.ratios.clone()).collect();
    let critical = ks_critical_value(stats.len(), Some(lim.reps), lim.level);
    let mut ratio_checks = Vec::new();
    for i in 0..kmax {
        let a: Vec<f64> = seed_ratios.iter().map(|r| r[i]).collect();
        let b: Vec<f64> = limit_ratios.iter().map(|r| r[i]).collect();
        ratio_checks.push(TestRecord::below(ks_two_sample(&a, &b)?, critical));
    }

    let (self_check, trace_bound, trace_rows) = if model.kind == KernelKind::Power {
        let t = trace_limit_sample(&kspec, alpha, lim.truncation, lim.seed, lim.reps)?;
        let emp: Vec<f64> = stats.iter().map(|s| s.self_normalized).collect();
        let rec = TestRecord::below(ks_two_sample(&emp, &t.self_normalized)?, critical);
        let rows: Vec<Vec<String>> = t.series.iter().zip(&t.self_normalized).map(|(s, r)| vec![f(*s), f(*r)]).collect();
        (Some(rec), Some(t.tail_bound), Some(rows))
    } else {
        (None, None, None)
    };

    let mut header: Vec<String> = vec!["seed".into(), "lambda1_normalized".into()];
    header.extend((1..=kmax).map(|i| format!("ratio_{i}")));
    header.extend(["argmin".into(), "self_normalized".into()]);
    let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows = cfg
        .seeds
        .iter()
        .zip(&stats)
        .map(|(seed, s)| {
            let mut r = vec![seed.to_string(), f(s.normalized)];
            r.extend(s.ratios.iter().map(|x| f(*x)));
            r.extend([s.argmin.to_string(), f(s.self_normalized)]);
            r
        })
        .collect();
    o.table("limits_seeds.csv", None, &hdr, rows)?;

    let mut lhdr: Vec<String> = vec!["rep".into()];
    lhdr.extend((1..=kmax).map(|i| format!("ratio_{i}")));
    let lhdr: Vec<&str> = lhdr.iter().map(|s| s.as_str()).collect();
    let lrows = limit_ratios
        .iter()
        .enumerate()
        .map(|(i, r)| std::iter::once((i + 1).to_string()).chain(r.iter().map(|x| f(*x))).collect())
        .collect();
    o.table("limit_ratios.csv", None, &lhdr, lrows)?;
    if let Some(rows) = trace_rows {
        o.table("trace_limit.csv", None, &["series", "self_normalized"], rows)?;
    }

    let summary = LimitsSummary {
        kind: "limits",
        matrix: model.kind,
        lags: [model.s1, model.s2],
        alpha,
        a_np: model.a_np()?,
        kernel: kspec.record(),
        argmin_frequencies: argmin_frequencies(&seed_ratios, kmax),
        limit_argmin_frequencies: argmin_frequencies(&limit_ratios, kmax),
        trace_tail_bound: trace_bound,
        checks: LimitsChecks { frechet, ratios: ratio_checks, self_normalized: self_check },
    };
    o.json("summary.json", &summary)
}

#[derive(Serialize)]
struct ClosedForm {
    density_sup_error: f64,
    esd_ks: f64,
}

#[derive(Serialize)]
struct LsdSummary {
    kind: &'static str,
    gamma: f64,
    eps: f64,
    mass: f64,
    max_residual: f64,
    max_iterations: usize,
    esd_ks: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    marchenko_pastur: Option<ClosedForm>,
}

fn is_identity(filter: &FilterCoefficients) -> bool {
    filter.nrows() == 1 && filter.ncols() == 1 && filter.coefficients[0][0].abs() == 1.0
}

fn run_lsd(cfg: &ExperimentConfig, o: &mut Output) -> Result<(), CliError> {
    let (p, n) = cfg.dims()?;
    let filter = cfg.filter()?;
    let dist = cfg.dist()?;
    let l = &cfg.lsd;
    let gamma = p as f64 / n as f64;
    let abs_sum: f64 = filter.coefficients.iter().flatten().map(|h| h.abs()).sum();
    let x_min = l.x_min.unwrap_or(0.0);
    let x_max = l.x_max.unwrap_or(abs_sum * abs_sum * (1.0 + gamma.sqrt()).powi(2) * 1.05);
    if !(x_max > x_min) {
        return Err(CliError::Config(format!("[lsd] empty x range [{x_min}, {x_max}]")));
    }
    let dx = (x_max - x_min) / (l.points - 1) as f64;
    let xs: Vec<f64> = (0..l.points).map(|i| x_min + i as f64 * dx).collect();
    let sols: Vec<StieltjesSolution> = stieltjes_path(&filter, gamma, &xs, l.eps, &l.solver())?;
    let density = density_from_stieltjes(&sols);

    let eigs: Vec<Vec<f64>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let x = generate_process(&filter, &dist, p, n, 0, seed)?;
            let covs = LaggedCovariances::compute(&x, 0, &CenteringPolicy::off())?;
            Ok(symmetric_eigenvalues(covs.get(0)?)?.into_iter().map(|v| v / n as f64).collect())
        })
        .collect::<Result<_, CliError>>()?;
    let pooled: Vec<f64> = eigs.into_iter().flatten().collect();
    let total = pooled.len() as f64;
    let mut hist = vec![0.0; xs.len()];
    for v in &pooled {
        let idx = ((v - x_min) / dx + 0.5).floor();
        if idx >= 0.0 && (idx as usize) < hist.len() {
            hist[idx as usize] += 1.0 / (total * dx);
        }
    }

    // cumulative trapezoid of the inverted density, plus any atom at zero
    let mut cum = vec![0.0; xs.len()];
    for i in 1..xs.len() {
        cum[i] = cum[i - 1] + 0.5 * dx * (density[i - 1] + density[i]);
    }
    let mass = cum[cum.len() - 1];
    let atom = (1.0 - mass).max(0.0).min(heavycov::lsd::mp_point_mass(gamma));
    let lsd_cdf = |x: f64| {
        if x < x_min {
            return 0.0;
        }
        let pos = ((x - x_min) / dx).min((xs.len() - 1) as f64);
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let c = if i + 1 < cum.len() { cum[i] * (1.0 - frac) + cum[i + 1] * frac } else { cum[i] };
        (atom + c).min(1.0)
    };
    let esd_ks = ks_distance(&pooled, lsd_cdf)?;

    let marchenko_pastur = if is_identity(&filter) {
        let (a, b) = mp_support(gamma);
        let mut sup: f64 = 0.0;
        for (x, d) in xs.iter().zip(&density) {
            if *x >= a + 0.1 && *x <= b - 0.1 {
                sup = sup.max((d - mp_density(gamma, *x)?).abs());
            }
        }
        Some(ClosedForm { density_sup_error: sup, esd_ks: ks_distance(&pooled, |x| mp_cdf(gamma, x))? })
    } else {
        None
    };

    let rows = xs.iter().zip(&density).zip(&hist).map(|((x, d), h)| vec![f(*x), f(*d), f(*h)]).collect();
    o.table("lsd.csv", None, &["x", "density", "esd_histogram"], rows)?;
    let srows = sols
        .iter()
        .map(|s| vec![f(s.z.re), f(s.z.im), f(s.s.re), f(s.s.im), s.iterations.to_string(), f(s.residual)])
        .collect();
    o.table("stieltjes.csv", None, &["re_z", "im_z", "re_s", "im_s", "iterations", "residual"], srows)?;

    let summary = LsdSummary {
        kind: "lsd",
        gamma,
        eps: l.eps,
        mass,
        max_residual: sols.iter().map(|s| s.residual).fold(0.0, f64::max),
        max_iterations: sols.iter().map(|s| s.iterations).max().unwrap_or(0),
        esd_ks,
        marchenko_pastur,
    };
    o.json("summary.json", &summary)
}
