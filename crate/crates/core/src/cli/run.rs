//! Experiment runner: one function per command, artifacts written at the end
//! together with a hashed manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{Command, ExperimentConfig, Format};
use super::plot::{log_log_slope, render_svg, PlotKind, Series};
use crate::error::{Error, Result};
use crate::lab::{
    gen_data_matrix, mc_map, median, perturbation_from_covariance, quantile_sorted,
    sample_covariance, sample_covariance_centered, sym_eigen, DataMatrix, ExperimentShape,
    GroundTruthModel, ModelKind, Summary,
};
use crate::mp::{density_curve, density_csv, mp_cdf, mp_density, stieltjes_fixed_point, LimitSpectrum, MpLaw};
use crate::reconstruct::{
    h_vector, interior_range, invert_spectrum, relative_shift_stieltjes, relative_shift_sum,
    rescaled_a, summarize_trials, REPORT_HEADER,
};
use crate::rng::{domain_seed, UniformStream};
use crate::secular::{
    arrowhead_oracle, interlacing_check, locality_profile, secular_solve, SecularProblem,
};
use crate::spectrum::{format_float, ks_distance, shift_ratio_ascending, signed_shift, Role, Spectrum};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "SPECRECON_THREADS";

pub const SIMULATE_HEADER: &str = "index,truth,sample_median,sample_q05,sample_q95";
pub const SCALING_HEADER: &str = "c,n,mean_abs_err,mean_abs_err_reconstructed,median_a";
pub const MP_HEADER: &str = "trial,ks,near_zero";
pub const INSERT_HEADER: &str = "index,full,restricted,ratio,h";
pub const VALIDATE_HEADER: &str = "check,value,threshold,pass";

/// Relative level below which sample eigenvalues count as exact zeros.
pub const NEAR_ZERO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub command: Command,
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub files: Vec<ManifestEntry>,
    /// `false` when a `validate` check failed.
    pub passed: bool,
    #[serde(skip)]
    pub summary: Value,
}

/// Collected outputs of one command before they are written.
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    summary: Value,
    passed: bool,
}

impl Artifacts {
    fn new(summary: Value) -> Self {
        Artifacts { files: Vec::new(), summary, passed: true }
    }

    fn csv(&mut self, cfg: &ExperimentConfig, name: &str, text: String) {
        if cfg.wants(Format::Csv) {
            self.files.push((name.to_string(), text.into_bytes()));
        }
    }

    fn svg(&mut self, cfg: &ExperimentConfig, kind: PlotKind, series: &[Series]) -> Result<()> {
        if cfg.wants(Format::Svg) {
            let text = render_svg(series, kind)?;
            self.files.push((format!("{}.svg", kind.file_stem()), text.into_bytes()));
        }
        Ok(())
    }
}

/// Runs the configured command with the worker count from
/// `SPECRECON_THREADS` (all cores when unset).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            Error::ConfigParse(format!("{THREADS_ENV}: expected a positive integer, got `{v}`"))
        })?),
        Err(_) => None,
    };
    run_with_threads(cfg, threads)
}

/// Same as [`run_experiment`] with an explicit worker count.
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let art = pool.install(|| match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Reconstruct => reconstruct(cfg),
        Command::Validate => validate(cfg),
        Command::Scaling => scaling(cfg),
        Command::MpCompare => mp_compare(cfg),
        Command::Insert => insert(cfg),
    })?;
    write_artifacts(cfg, art)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_artifacts(cfg: &ExperimentConfig, mut art: Artifacts) -> Result<RunOutcome> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let summary = json!({
        "command": cfg.command.as_str(),
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "results": art.summary,
    });
    if cfg.wants(Format::Json) {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        art.files.push(("summary.json".into(), text.into_bytes()));
    }
    art.files.sort_by(|a, b| a.0.cmp(&b.0));
    let mut entries = Vec::with_capacity(art.files.len());
    for (name, bytes) in &art.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        entries.push(ManifestEntry {
            path: name.clone(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }
    let manifest = json!({
        "command": cfg.command.as_str(),
        "seed": cfg.seed,
        "passed": art.passed,
        "files": entries,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(RunOutcome {
        command: cfg.command,
        output_dir: dir.clone(),
        files: entries,
        passed: art.passed,
        summary,
    })
}

fn context(what: &str, e: Error) -> Error {
    match e {
        Error::NoConvergence(m) => Error::NoConvergence(format!("{what}: {m}")),
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{what}: {m}")),
        other => other,
    }
}

fn model(cfg: &ExperimentConfig) -> Result<GroundTruthModel> {
    GroundTruthModel::new(cfg.model.clone(), cfg.p, cfg.seed)
}

fn covariance(cfg: &ExperimentConfig, x: &DataMatrix) -> nalgebra::DMatrix<f64> {
    if cfg.center {
        sample_covariance_centered(x)
    } else {
        sample_covariance(x)
    }
}

fn sample_spectrum(cfg: &ExperimentConfig, shape: &ExperimentShape, m: &GroundTruthModel) -> Result<Spectrum> {
    let x = gen_data_matrix(shape, m)?;
    sym_eigen(&covariance(cfg, &x), false)?.spectrum(Role::Sample)
}

/// Per-index medians over trials.
fn column_medians(rows: &[Vec<f64>]) -> Vec<f64> {
    let p = rows[0].len();
    (0..p).map(|j| median(&rows.iter().map(|r| r[j]).collect::<Vec<_>>())).collect()
}

fn f(v: f64) -> String {
    format_float(v)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let truth = model(cfg)?;
    let shape = ExperimentShape::from_ratio(cfg.p, cfg.c, cfg.seed)?;
    let spectra = mc_map(cfg.seed, cfg.trials, |t, _| {
        sample_spectrum(cfg, &shape.for_trial(t), &truth).map(|s| s.values().to_vec())
    })?;
    let tv = truth.realized().values();
    let mut csv = format!("{SIMULATE_HEADER}\n");
    let mut med = Vec::with_capacity(cfg.p);
    for j in 0..cfg.p {
        let mut col: Vec<f64> = spectra.iter().map(|s| s[j]).collect();
        col.sort_by(f64::total_cmp);
        let m = quantile_sorted(&col, 0.5);
        med.push(m);
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            j + 1,
            f(tv[j]),
            f(m),
            f(quantile_sorted(&col, 0.05)),
            f(quantile_sorted(&col, 0.95))
        );
    }
    let top: Vec<f64> = spectra.iter().map(|s| s[0]).collect();
    let bottom: Vec<f64> = spectra.iter().map(|s| s[cfg.p - 1]).collect();
    let trace: Vec<f64> = spectra.iter().map(|s| s.iter().sum()).collect();
    let mut art = Artifacts::new(json!({
        "trials": cfg.trials,
        "n": shape.n,
        "truth_trace": tv.iter().sum::<f64>(),
        "top_eigenvalue": Summary::of(&top)?,
        "bottom_eigenvalue": Summary::of(&bottom)?,
        "trace": Summary::of(&trace)?,
    }));
    art.csv(cfg, "report.csv", csv);
    art.svg(
        cfg,
        PlotKind::SpectrumOverlay,
        &[Series::indexed("truth", tv), Series::indexed("sample (median)", &med)],
    )?;
    Ok(art)
}

fn reconstruct(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let truth = model(cfg)?;
    let shape = ExperimentShape::from_ratio(cfg.p, cfg.c, cfg.seed)?;
    let reports = mc_map(cfg.seed, cfg.trials, |t, _| {
        let s = sample_spectrum(cfg, &shape.for_trial(t), &truth)?;
        let mut r = invert_spectrum(&s, cfg.c, cfg.k)?;
        r.attach_truth(truth.realized())?;
        Ok(r)
    })?;
    let sum = summarize_trials(&reports)?;
    let tv = truth.realized().values();
    let mut csv = format!("{REPORT_HEADER}\n");
    for j in 0..cfg.p {
        let valid = reports.iter().filter(|r| r.records[j].valid).count() * 2 >= reports.len();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            j + 1,
            f(sum.median_sample[j]),
            f(sum.median_estimate[j]),
            f(tv[j]),
            f(sum.median_raw_rel_err[j]),
            f(sum.median_recon_rel_err[j]),
            valid
        );
    }
    let (lo, hi) = interior_range(cfg.p);
    let per_trial: Vec<Value> = reports
        .iter()
        .map(|r| {
            let a = r.aggregate.as_ref().expect("truth attached");
            json!({
                "improved_fraction": a.improved_fraction,
                "median_raw_rel_err": a.median_raw_rel_err,
                "median_recon_rel_err": a.median_recon_rel_err,
                "invalid_count": a.invalid_count,
            })
        })
        .collect();
    let mut art = Artifacts::new(json!({
        "trials": cfg.trials,
        "n": cfg.c * cfg.p as f64,
        "interior": [lo, hi],
        "improved_fraction": sum.improved_fraction,
        "interior_median_raw_rel_err": sum.interior_median_raw,
        "interior_median_recon_rel_err": sum.interior_median_recon,
        "per_trial": per_trial,
    }));
    art.csv(cfg, "report.csv", csv);
    art.svg(
        cfg,
        PlotKind::SpectrumOverlay,
        &[
            Series::indexed("truth", tv),
            Series::indexed("sample", &sum.median_sample),
            Series::indexed("reconstructed", &sum.median_estimate),
        ],
    )?;
    Ok(art)
}

/// Interior mean absolute errors of raw and reconstructed values, and the
/// per-index rescaled bias `c (sample - truth)`, for one trial.
struct ScalingTrial {
    raw: f64,
    recon: f64,
    a: Vec<f64>,
}

fn scaling(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let truth = model(cfg)?;
    let tv = truth.realized().values().to_vec();
    let (lo, hi) = interior_range(cfg.p);
    let mut rows = Vec::new();
    let mut csv = format!("{SCALING_HEADER}\n");
    let mut a_medians: Vec<Vec<f64>> = Vec::new();
    for (ci, &c) in cfg.c_values.iter().enumerate() {
        let shape = ExperimentShape::from_ratio(cfg.p, c, domain_seed(cfg.seed, ci as u64 + 10))?;
        let trials = mc_map(shape.master_seed, cfg.trials, |t, _| {
            let s = sample_spectrum(cfg, &shape.for_trial(t), &truth)?;
            let r = invert_spectrum(&s, c, cfg.k)?;
            let sv = s.values();
            let band = lo - 1..hi;
            let len = band.len() as f64;
            let raw = band.clone().map(|j| (sv[j] - tv[j]).abs()).sum::<f64>() / len;
            let recon = band.clone().map(|j| (r.records[j].estimate - tv[j]).abs()).sum::<f64>() / len;
            let a = band.map(|j| rescaled_a(sv[j], tv[j], c)).collect::<Result<Vec<_>>>()?;
            Ok(ScalingTrial { raw, recon, a })
        })?;
        let k = trials.len() as f64;
        let raw = trials.iter().map(|t| t.raw).sum::<f64>() / k;
        let recon = trials.iter().map(|t| t.recon).sum::<f64>() / k;
        let a_rows: Vec<Vec<f64>> = trials.into_iter().map(|t| t.a).collect();
        let a_med = column_medians(&a_rows);
        let med_a = median(&a_med);
        let _ = writeln!(csv, "{},{},{},{},{}", f(c), shape.n, f(raw), f(recon), f(med_a));
        rows.push((c, shape.n, raw, recon, med_a));
        a_medians.push(a_med);
    }
    let cs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let raw: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let recon: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let slope = log_log_slope(&cs, &raw);
    // stabilization of a(c) between the two largest ratios, per interior index
    let (prev, last) = (&a_medians[a_medians.len() - 2], &a_medians[a_medians.len() - 1]);
    let ratios: Vec<f64> = prev
        .iter()
        .zip(last)
        .filter(|(p, _)| p.abs() > 0.0)
        .map(|(p, l)| (l - p).abs() / p.abs())
        .collect();
    let a_ratio = if ratios.is_empty() { None } else { Some(median(&ratios)) };
    let per_c: Vec<Value> = rows
        .iter()
        .map(|r| json!({"c": r.0, "n": r.1, "mean_abs_err": r.2, "mean_abs_err_reconstructed": r.3, "median_a": r.4}))
        .collect();
    let mut art = Artifacts::new(json!({
        "trials": cfg.trials,
        "interior": [lo, hi],
        "per_c": per_c,
        "slope": slope,
        "slope_reconstructed": log_log_slope(&cs, &recon),
        "a_stability": a_ratio,
    }));
    art.csv(cfg, "report.csv", csv);
    let mut series = vec![Series::new("sample", cs.clone(), raw)];
    if recon.iter().all(|v| *v > 0.0) {
        series.push(Series::new("reconstructed", cs, recon));
    }
    art.svg(cfg, PlotKind::ErrorVsC, &series)?;
    Ok(art)
}

/// Reference distribution for `mp-compare`: the closed form for the
/// identity model, otherwise the fixed-point density of the realized
/// population spectrum integrated on a grid.
enum Reference {
    Closed(MpLaw),
    Tabulated { grid: Vec<f64>, cdf: Vec<f64> },
}

impl Reference {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            Reference::Closed(law) => mp_cdf(x, law).unwrap_or(f64::NAN),
            Reference::Tabulated { grid, cdf } => {
                if x < grid[0] {
                    return 0.0;
                }
                let k = grid.partition_point(|&g| g <= x);
                if k >= grid.len() {
                    return 1.0;
                }
                let (x0, x1) = (grid[k - 1], grid[k]);
                cdf[k - 1] + (cdf[k] - cdf[k - 1]) * (x - x0) / (x1 - x0)
            }
        }
    }
}

fn mp_compare(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let truth = model(cfg)?;
    let shape = ExperimentShape::from_ratio(cfg.p, cfg.c, cfg.seed)?;
    let c = shape.c;
    let tv = truth.realized().values();
    let top = tv[0] * (1.0 + 1.0 / c.sqrt()).powi(2);
    let grid: Vec<f64> = (0..=800).map(|k| 1.1 * top * k as f64 / 800.0).collect();
    let limit = LimitSpectrum::uniform(tv, c)?;
    let curve = density_curve(&limit, &grid, cfg.eta).map_err(|e| context("density curve", e))?;
    let dens: Vec<f64> = curve.iter().map(|p| p.density).collect();
    let point_mass = (1.0 - c).max(0.0);
    let identity = matches!(truth.spec.kind, ModelKind::Identity);
    let reference = if identity {
        Reference::Closed(MpLaw::new(c)?)
    } else {
        let mut cdf = vec![point_mass];
        for k in 1..grid.len() {
            let step = 0.5 * (grid[k] - grid[k - 1]) * (dens[k] + dens[k - 1]);
            cdf.push(cdf[k - 1] + step);
        }
        // continuous part normalized to 1 - point mass
        let total = cdf[cdf.len() - 1] - point_mass;
        if total > 0.0 {
            for v in cdf.iter_mut() {
                *v = point_mass + (*v - point_mass) * (1.0 - point_mass) / total;
            }
        }
        Reference::Tabulated { grid: grid.clone(), cdf }
    };
    let trials = mc_map(cfg.seed, cfg.trials, |t, _| {
        let s = sample_spectrum(cfg, &shape.for_trial(t), &truth)?.snap_near_zero(NEAR_ZERO);
        let ks = ks_distance(&s, |x| reference.cdf(x))?;
        if !ks.is_finite() {
            return Err(Error::QuadratureFailure { lo: 0.0, hi: top });
        }
        Ok((ks, s.zero_count(), s))
    })?;
    let mut csv = format!("{MP_HEADER}\n");
    for (t, (ks, z, _)) in trials.iter().enumerate() {
        let _ = writeln!(csv, "{t},{},{z}", f(*ks));
    }
    let ks: Vec<f64> = trials.iter().map(|t| t.0).collect();
    let zeros: Vec<usize> = trials.iter().map(|t| t.1).collect();
    let mut art = Artifacts::new(json!({
        "trials": cfg.trials,
        "n": shape.n,
        "reference": if identity { "marchenko_pastur" } else { "fixed_point" },
        "ks": ks,
        "ks_median": median(&ks),
        "ks_max": ks.iter().cloned().fold(0.0, f64::max),
        "near_zero": zeros,
        "expected_near_zero": shape.p.saturating_sub(shape.n),
    }));
    art.csv(cfg, "report.csv", csv);
    let pts: Vec<(f64, f64)> = grid.iter().copied().zip(dens.iter().copied()).collect();
    art.csv(cfg, "density.csv", density_csv(&pts));

    // histogram of the pooled trials, mass above zero only
    let bins = 60;
    let width = 1.1 * top / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for (_, _, s) in &trials {
        for &v in s.values() {
            if v > 0.0 {
                counts[((v / width) as usize).min(bins - 1)] += 1;
            }
            total += 1;
        }
    }
    let hx: Vec<f64> = (0..bins).map(|b| (b as f64 + 0.5) * width).collect();
    let hy: Vec<f64> = counts.iter().map(|&n| n as f64 / (total as f64 * width)).collect();
    let mut series = vec![Series::new("fixed point", grid.clone(), dens)];
    if identity {
        let law = MpLaw::new(c)?;
        series.push(Series::new("closed form", grid.clone(), grid.iter().map(|&x| mp_density(x, &law)).collect()));
    }
    series.push(Series::new("sample histogram", hx, hy));
    art.svg(cfg, PlotKind::DensityOverlay, &series)?;
    Ok(art)
}

struct InsertTrial {
    fraction: f64,
    sign_change: Option<usize>,
    insertion_index: usize,
    secular_dev: f64,
    full: Vec<f64>,
    restricted: Vec<f64>,
    ratios: Vec<f64>,
    h: Vec<f64>,
}

fn insert(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let truth = model(cfg)?;
    let shape = ExperimentShape::from_ratio(cfg.p, cfg.c, cfg.seed)?;
    let i = cfg.insert_column();
    let sigma2 = truth.realized().values()[i];
    let far = 10usize;
    let trials = mc_map(cfg.seed, cfg.trials, |t, _| {
        let x = gen_data_matrix(&shape.for_trial(t), &truth)?;
        let s = covariance(cfg, &x);
        let col = perturbation_from_covariance(&s, i)?;
        let prob = SecularProblem::from_column(&col)?;
        let full = secular_solve(&prob).map_err(|e| context("secular solve", e))?;
        let dense = sym_eigen(&s, false)?.spectrum(Role::Sample)?;
        let secular_dev = full
            .values()
            .iter()
            .zip(dense.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / dense.scale().max(f64::MIN_POSITIVE);
        let prof = locality_profile(&full, &col.nu, i)?;
        let h = h_vector(&full, sigma2, &col.nu, cfg.c, cfg.k)?;
        Ok(InsertTrial {
            fraction: prof.fraction_below(0.1, i, far),
            sign_change: h.sign_change,
            insertion_index: prof.insertion_index,
            secular_dev,
            full: full.values().to_vec(),
            restricted: col.nu.values().to_vec(),
            ratios: prof.ratios,
            h: h.values,
        })
    })?;
    let first = &trials[0];
    let mut csv = format!("{INSERT_HEADER}\n");
    for j in 0..cfg.p {
        let nu = first.restricted.get(j).map(|v| f(*v)).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{nu},{},{}", j + 1, f(first.full[j]), f(first.ratios[j]), f(first.h[j]));
    }
    let fractions: Vec<f64> = trials.iter().map(|t| t.fraction).collect();
    // share of far indices whose ratio, averaged over trials, is below 0.1
    let far_idx: Vec<usize> = (0..cfg.p).filter(|j| j.abs_diff(i) > far).collect();
    let expected_ok = far_idx
        .iter()
        .filter(|&&j| trials.iter().map(|t| t.ratios[j]).sum::<f64>() / (trials.len() as f64) < 0.1)
        .count();
    let expected_fraction = if far_idx.is_empty() { 1.0 } else { expected_ok as f64 / far_idx.len() as f64 };
    let changes: Vec<f64> = trials.iter().filter_map(|t| t.sign_change.map(|s| s as f64)).collect();
    let sc_median = (!changes.is_empty()).then(|| median(&changes));
    let tolerance = 3f64.max(0.02 * cfg.p as f64);
    let within = sc_median.map(|m| (m - i as f64).abs() <= tolerance);
    let inserted: Vec<f64> = trials.iter().map(|t| t.insertion_index as f64).collect();
    let mut art = Artifacts::new(json!({
        "trials": cfg.trials,
        "insert_index": i + 1,
        "min_distance": far,
        "ratio_threshold": 0.1,
        "far_fraction_below": fractions,
        "far_fraction_below_median": median(&fractions),
        "far_fraction_expected_below": expected_fraction,
        "sign_change_median": sc_median.map(|m| m + 1.0),
        "sign_change_missing": trials.len() - changes.len(),
        "sign_change_tolerance": tolerance,
        "sign_change_within_tolerance": within,
        "insertion_index_median": median(&inserted) + 1.0,
        "secular_max_deviation": trials.iter().map(|t| t.secular_dev).fold(0.0, f64::max),
    }));
    art.csv(cfg, "report.csv", csv);
    art.svg(
        cfg,
        PlotKind::SpectrumOverlay,
        &[Series::indexed("full", &first.full), Series::indexed("restricted", &first.restricted)],
    )?;
    Ok(art)
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    check: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn at_most(check: &'static str, value: f64, threshold: f64) -> Self {
        Check { check, value, threshold, pass: value <= threshold }
    }
}

/// Random PSD arrowhead problem of dimension `p`.
fn random_problem(u: &mut UniformStream, p: usize) -> Result<SecularProblem> {
    let nu: Vec<f64> = (0..p - 1).map(|_| 0.1 + 10.0 * u.next_f64()).collect();
    let e: Vec<f64> = (0..p - 1).map(|_| 4.0 * (u.next_f64() - 0.5)).collect();
    let spec = Spectrum::new(&nu, Role::Restricted)?;
    let schur: f64 = spec.values().iter().zip(&e).map(|(v, e)| e * e / v).sum();
    SecularProblem::new(spec, schur + 5.0 * u.next_f64(), e)
}

fn validate(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut checks = Vec::new();
    let models = ["identity", "linear(1,10)", "geometric(1,100)", "two_cluster(5,1,0.3)", "iid:linear(1,10)"];

    // interlacing of full and restricted spectra
    let fails = mc_map(domain_seed(cfg.seed, 20), 200, |t, seed| {
        let mut u = UniformStream::new(seed);
        let p = 3 + (u.next_f64() * 30.0) as usize;
        let n = 2 + (u.next_f64() * 4.0 * p as f64) as usize;
        let m = GroundTruthModel::new(models[t as usize % models.len()].parse()?, p, seed)?;
        let x = gen_data_matrix(&ExperimentShape::new(p, n, seed)?, &m)?;
        let s = sample_covariance(&x);
        let full = sym_eigen(&s, false)?.spectrum(Role::Sample)?;
        let col = perturbation_from_covariance(&s, t as usize % p)?;
        Ok(usize::from(!interlacing_check(&full, &col.nu)?))
    })?;
    checks.push(Check::at_most("interlacing_failures", fails.iter().sum::<usize>() as f64, 0.0));

    // secular roots against the dense eigensolver
    let devs = mc_map(domain_seed(cfg.seed, 21), 200, |_, seed| {
        let mut u = UniformStream::new(seed);
        let p = 2 + (u.next_f64() * 31.0) as usize;
        let prob = random_problem(&mut u, p)?;
        let roots = secular_solve(&prob)?;
        let dense = sym_eigen(&arrowhead_oracle(&prob), false)?.spectrum(Role::Sample)?;
        let dev = roots.values().iter().zip(dense.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let trace_in: f64 = prob.nu.values().iter().sum::<f64>() + prob.e_diag;
        let trace_out: f64 = roots.values().iter().sum();
        Ok((dev / prob.scale(), (trace_out - trace_in).abs() / trace_in.abs().max(f64::MIN_POSITIVE)))
    })?;
    checks.push(Check::at_most("secular_vs_dense", devs.iter().map(|d| d.0).fold(0.0, f64::max), 1e-8));
    checks.push(Check::at_most("secular_trace", devs.iter().map(|d| d.1).fold(0.0, f64::max), 1e-10));

    // two routes to the relative shift on one sample spectrum
    let truth = model(cfg)?;
    let shape = ExperimentShape::from_ratio(cfg.p, cfg.c, cfg.seed)?;
    let sample = sample_spectrum(cfg, &shape, &truth)?;
    let mut worst = 0.0f64;
    for i in 0..sample.p() {
        if let (Ok(a), Ok(b)) = (relative_shift_sum(&sample, i), relative_shift_stieltjes(&sample, i)) {
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    checks.push(Check::at_most("relative_shift_routes", worst, 1e-10));

    // inversion is scale-equivariant
    let base = invert_spectrum(&sample, cfg.c, cfg.k)?;
    let scaled = invert_spectrum(&sample.scaled(3.5), cfg.c, cfg.k)?;
    let eq = base
        .records
        .iter()
        .zip(&scaled.records)
        .map(|(a, b)| (3.5 * a.estimate - b.estimate).abs() / b.estimate.abs().max(1e-300))
        .fold(0.0, f64::max);
    checks.push(Check::at_most("inversion_scale_equivariance", eq, 1e-12));

    // fixed point against the closed-form law
    let mut dens_err = 0.0f64;
    let mut resid = 0.0f64;
    for c in [0.5, 2.0, 4.0] {
        let law = MpLaw::new(c)?;
        let spec = LimitSpectrum::uniform(&[1.0], c)?;
        for k in 0..100 {
            let x = law.a + (law.b - law.a) * (k as f64 + 0.5) / 100.0;
            let fp = stieltjes_fixed_point(x, 1e-5, &spec)?;
            dens_err = dens_err.max((fp.density - mp_density(x, &law)).abs());
            resid = resid.max(fp.residual);
        }
        let top = mp_cdf(law.b.next_down(), &law)?;
        checks.push(Check::at_most("mp_cdf_normalization", (top - 1.0).abs(), 1e-8));
    }
    checks.push(Check::at_most("fixed_point_density", dens_err, 1e-3));
    checks.push(Check::at_most("fixed_point_residual", resid, 1e-10));

    // worked example: five restricted values and six full ones
    let full = Spectrum::new(&[0.9, 1.9, 2.5, 3.3, 4.2, 5.2], Role::Sample)?;
    let nu = Spectrum::new(&[1.0, 2.0, 3.0, 4.0, 5.0], Role::Restricted)?;
    let g = signed_shift(&full, &nu)?;
    let shape_ok = g.alternates() && g.total_mass() == 1;
    checks.push(Check::at_most("signed_shift_shape", if shape_ok { 0.0 } else { 1.0 }, 0.0));
    checks.push(Check::at_most("shift_ratio_example", (shift_ratio_ascending(&full, &nu, 1)? - 0.1).abs(), 1e-12));

    let mut csv = format!("{VALIDATE_HEADER}\n");
    for c in &checks {
        let _ = writeln!(csv, "{},{},{},{}", c.check, f(c.value), f(c.threshold), c.pass);
    }
    let passed = checks.iter().all(|c| c.pass);
    let mut art = Artifacts::new(json!({
        "passed": passed,
        "checks": checks,
    }));
    art.passed = passed;
    art.csv(cfg, "report.csv", csv);
    let idx: Vec<f64> = (1..=sample.p()).map(|i| i as f64).collect();
    art.svg(
        cfg,
        PlotKind::SpectrumOverlay,
        &[
            Series::new("truth", idx.clone(), truth.realized().values().to_vec()),
            Series::new("sample", idx.clone(), sample.values().to_vec()),
            Series::new("reconstructed", idx, base.estimates()),
        ],
    )?;
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::super::config::parse_with_overrides;
    use super::*;

    fn cfg(dir: &Path, extra: &[&str]) -> ExperimentConfig {
        let mut o: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        o.push(format!("output_dir=\"{}\"", dir.display()));
        parse_with_overrides("", &o).unwrap()
    }

    #[test]
    fn validate_small() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_with_threads(&cfg(dir.path(), &["p=40"]), Some(2)).unwrap();
        assert!(out.passed, "{:#}", out.summary);
        let names: Vec<&str> = out.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["report.csv", "spectrum_overlay.svg", "summary.json"]);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn formats_filter() {
        let dir = tempfile::tempdir().unwrap();
        let c = cfg(dir.path(), &["command=simulate", "p=20", "trials=3", "formats=[\"csv\"]"]);
        let out = run_with_threads(&c, Some(1)).unwrap();
        let names: Vec<&str> = out.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["report.csv"]);
    }

    #[test]
    fn unwritable_dir_is_io() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("blocker");
        std::fs::write(&file, b"x").unwrap();
        let c = cfg(&file.join("sub"), &["command=simulate", "p=10", "trials=1"]);
        let err = run_with_threads(&c, Some(1)).unwrap_err();
        assert_eq!(err.exit_code(), 4, "{err:?}");
    }

    #[test]
    fn tabulated_reference_interpolates() {
        let r = Reference::Tabulated { grid: vec![0.0, 1.0, 2.0], cdf: vec![0.0, 0.5, 1.0] };
        assert_eq!(r.cdf(-1.0), 0.0);
        assert_eq!(r.cdf(0.5), 0.25);
        assert_eq!(r.cdf(5.0), 1.0);
    }
}
