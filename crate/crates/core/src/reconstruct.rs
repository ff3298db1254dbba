//! Closed-form corrections between population and sample spectra: the
//! forward shift, its large-`c` form, the inversion estimator, the `h`
//! profile, the rescaled difference and the sample-size condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::median;
use crate::spectrum::{
    format_float, match_index, spectral_gap, stieltjes_sum, ExclusionWindow, Spectrum,
    POLE_REL_TOL,
};

/// Below this denominator the inversion is reported as broken down.
pub const DENOM_FLOOR: f64 = 0.05;

/// Exact CSV header of a reconstruction report.
pub const REPORT_HEADER: &str = "index,sample,estimate,truth,raw_rel_err,recon_rel_err,valid";

fn check_pole(index: usize, value: f64, z: f64) -> Result<f64> {
    let d = value - z;
    if d == 0.0 || d.abs() < POLE_REL_TOL * value.abs().max(z.abs()) {
        return Err(Error::PoleHit { index, value, z });
    }
    Ok(d)
}

/// Predicted `sample[i*] - truth[i]` where `i*` is the sample index closest
/// to `truth[i]`:
/// `-(truth_i / n) * sum_{j != i} truth_j / (truth_j - sample_{i*})`.
pub fn forward_shift(truth: &Spectrum, sample: &Spectrum, i: usize, n: usize) -> Result<f64> {
    let p = truth.p();
    if sample.p() != p {
        return Err(Error::SizeMismatch { expected: p, got: sample.p() });
    }
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let t = truth.values();
    let z = sample.values()[match_index(t[i], sample)?];
    let mut acc = 0.0;
    for (j, &tj) in t.iter().enumerate() {
        if j != i {
            acc += tj / check_pole(j, tj, z)?;
        }
    }
    Ok(-t[i] / n as f64 * acc)
}

/// Predicted `sample_i - sigma2_i` from the sample spectrum alone:
/// `-(sigma2_i / n) * sum_{s outside [i-K, i+K]} sample_s / (sample_s - sample_i)`.
pub fn large_c_forward(
    sigma2_i: f64,
    sample: &Spectrum,
    i: usize,
    n: usize,
    k: usize,
) -> Result<f64> {
    let p = sample.p();
    if 2 * k + 1 >= p {
        return Err(Error::WindowTooWide { k, p });
    }
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    let w = ExclusionWindow::new(i, k);
    let s = stieltjes_sum(sample, sample.values()[i], Some(&w))?;
    Ok(-sigma2_i / n as f64 * s * p as f64)
}

/// `-(1/p) sum_{j != i} sample_j / (sample_j - sample_i)`.
pub fn relative_shift_sum(sample: &Spectrum, i: usize) -> Result<f64> {
    let v = sample.values();
    let p = v.len();
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    let mut acc = 0.0;
    for (j, &x) in v.iter().enumerate() {
        if j != i {
            acc += x / check_pole(j, x, v[i])?;
        }
    }
    Ok(-acc / p as f64)
}

/// The same quantity through the Stieltjes transform of the empirical
/// spectral distribution with the atom at `sample_i` left out:
/// `-(p-1)/p - sample_i * m_p(sample_i)`.
pub fn relative_shift_stieltjes(sample: &Spectrum, i: usize) -> Result<f64> {
    let v = sample.values();
    let p = v.len();
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    let z = v[i];
    let mut m = 0.0;
    for (j, &x) in v.iter().enumerate() {
        if j != i {
            m += 1.0 / check_pole(j, x, z)?;
        }
    }
    m /= p as f64;
    Ok(-((p - 1) as f64) / p as f64 - z * m)
}

/// Parameters echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub p: usize,
    pub c: f64,
    /// `c * p`, kept real.
    pub n: f64,
    pub k: usize,
    pub denom_floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    /// 1-based position in the descending spectrum.
    pub index: usize,
    pub sample: f64,
    pub estimate: f64,
    pub truth: Option<f64>,
    pub raw_rel_err: Option<f64>,
    pub recon_rel_err: Option<f64>,
    pub valid: bool,
}

/// Interior summary of a report that carries ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub interior_lo: usize,
    pub interior_hi: usize,
    pub median_raw_rel_err: f64,
    pub median_recon_rel_err: f64,
    pub mean_raw_rel_err: f64,
    pub mean_recon_rel_err: f64,
    /// Share of interior indices where the estimate is strictly closer.
    pub improved_fraction: f64,
    pub invalid_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub config: InversionConfig,
    pub records: Vec<IndexRecord>,
    pub aggregate: Option<Aggregate>,
}

/// 1-based interior band `[ceil(0.05 p), floor(0.95 p)]`, clipped to `1..=p`.
pub fn interior_range(p: usize) -> (usize, usize) {
    let lo = ((0.05 * p as f64).ceil() as usize).max(1);
    let hi = ((0.95 * p as f64).floor() as usize).clamp(lo, p.max(1));
    (lo, hi)
}

fn rel_err(x: f64, t: f64) -> f64 {
    (x - t).abs() / t
}

impl ReconstructionReport {
    /// Fills the truth columns and the interior aggregate.
    pub fn attach_truth(&mut self, truth: &Spectrum) -> Result<()> {
        if truth.p() != self.records.len() {
            return Err(Error::SizeMismatch { expected: self.records.len(), got: truth.p() });
        }
        for (r, &t) in self.records.iter_mut().zip(truth.values()) {
            r.truth = Some(t);
            r.raw_rel_err = Some(rel_err(r.sample, t));
            r.recon_rel_err = Some(rel_err(r.estimate, t));
        }
        let (lo, hi) = interior_range(self.records.len());
        let band = &self.records[lo - 1..hi];
        let raw: Vec<f64> = band.iter().filter_map(|r| r.raw_rel_err).collect();
        let rec: Vec<f64> = band.iter().filter_map(|r| r.recon_rel_err).collect();
        let improved = raw.iter().zip(&rec).filter(|(a, b)| b < a).count();
        let len = band.len() as f64;
        self.aggregate = Some(Aggregate {
            interior_lo: lo,
            interior_hi: hi,
            median_raw_rel_err: median(&raw),
            median_recon_rel_err: median(&rec),
            mean_raw_rel_err: raw.iter().sum::<f64>() / len,
            mean_recon_rel_err: rec.iter().sum::<f64>() / len,
            improved_fraction: improved as f64 / len,
            invalid_count: band.iter().filter(|r| !r.valid).count(),
        });
        Ok(())
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.estimate).collect()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.index,
                format_float(r.sample),
                format_float(r.estimate),
                opt(r.truth),
                opt(r.raw_rel_err),
                opt(r.recon_rel_err),
                r.valid
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Estimates the population spectrum from a sample spectrum:
/// `sigma2_i = sample_i / (1 - (1/n) sum_{j outside [i-K, i+K]} sample_j / (sample_j - sample_i))`
/// with `n = c p`.
///
/// An index is flagged invalid, and its sample value returned, when a
/// retained term hits a pole or the denominator is at most
/// [`DENOM_FLOOR`].
pub fn invert_spectrum(sample: &Spectrum, c: f64, k: usize) -> Result<ReconstructionReport> {
    let p = sample.p();
    if p < 3 {
        return Err(Error::InvalidArgument(format!("inversion needs p >= 3, got {p}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("aspect ratio must be positive, got {c}")));
    }
    let n = c * p as f64;
    let v = sample.values();
    let records = (0..p)
        .map(|i| {
            let w = ExclusionWindow::new(i, k);
            let (estimate, valid) = match stieltjes_sum(sample, v[i], Some(&w)) {
                Ok(s) => {
                    let denom = 1.0 - s * p as f64 / n;
                    if denom <= DENOM_FLOOR {
                        (v[i], false)
                    } else {
                        let est = v[i] / denom;
                        if est < 0.0 {
                            (0.0, false)
                        } else {
                            (est, true)
                        }
                    }
                }
                Err(_) => (v[i], false),
            };
            IndexRecord {
                index: i + 1,
                sample: v[i],
                estimate,
                truth: None,
                raw_rel_err: None,
                recon_rel_err: None,
                valid,
            }
        })
        .collect();
    Ok(ReconstructionReport {
        config: InversionConfig { p, c, n, k, denom_floor: DENOM_FLOOR },
        records,
        aggregate: None,
    })
}

/// Per-index medians over trials that share one ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub median_sample: Vec<f64>,
    pub median_estimate: Vec<f64>,
    pub median_raw_rel_err: Vec<f64>,
    pub median_recon_rel_err: Vec<f64>,
    /// Share of interior indices whose median reconstructed error is below
    /// the median raw error.
    pub improved_fraction: f64,
    /// Interior median of the per-index median errors.
    pub interior_median_raw: f64,
    pub interior_median_recon: f64,
}

/// Aggregates reports that already carry truth.
pub fn summarize_trials(reports: &[ReconstructionReport]) -> Result<TrialSummary> {
    let first = reports.first().ok_or_else(|| Error::EmptySeries("reports".into()))?;
    let p = first.records.len();
    let column = |f: &dyn Fn(&IndexRecord) -> Option<f64>| -> Result<Vec<f64>> {
        (0..p)
            .map(|i| {
                let xs = reports
                    .iter()
                    .map(|r| {
                        r.records
                            .get(i)
                            .and_then(f)
                            .ok_or_else(|| Error::InvalidArgument("report without truth".into()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(median(&xs))
            })
            .collect()
    };
    let median_sample = column(&|r| Some(r.sample))?;
    let median_estimate = column(&|r| Some(r.estimate))?;
    let raw = column(&|r| r.raw_rel_err)?;
    let rec = column(&|r| r.recon_rel_err)?;
    let (lo, hi) = interior_range(p);
    let band = lo - 1..hi;
    let improved = band.clone().filter(|&i| rec[i] < raw[i]).count();
    Ok(TrialSummary {
        trials: reports.len(),
        improved_fraction: improved as f64 / band.len() as f64,
        interior_median_raw: median(&raw[band.clone()]),
        interior_median_recon: median(&rec[band]),
        median_sample,
        median_estimate,
        median_raw_rel_err: raw,
        median_recon_rel_err: rec,
    })
}

/// `h_j` for every sample index and the first index where it is negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HVector {
    pub values: Vec<f64>,
    /// First `j` with `h_j < 0`, when `h_0 >= 0`; `None` without a crossing.
    pub sign_change: Option<usize>,
}

/// `h_j = sample_j - sigma2_i + (1/c)(sigma2_i/p) sum_{s outside [j-K, j+K]} nu_s / (nu_s - sample_j)`.
pub fn h_vector(
    sample: &Spectrum,
    sigma2_i: f64,
    restricted: &Spectrum,
    c: f64,
    k: usize,
) -> Result<HVector> {
    let p = sample.p();
    if restricted.p() + 1 != p {
        return Err(Error::SizeMismatch { expected: p - 1, got: restricted.p() });
    }
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("aspect ratio must be positive, got {c}")));
    }
    let nu = restricted.values();
    let mut values = Vec::with_capacity(p);
    for (j, &x) in sample.values().iter().enumerate() {
        let w = ExclusionWindow::new(j, k);
        let mut acc = 0.0;
        for (s, &v) in nu.iter().enumerate() {
            if !w.contains(s) {
                acc += v / check_pole(s, v, x)?;
            }
        }
        values.push(x - sigma2_i + sigma2_i / (c * p as f64) * acc);
    }
    let sign_change = match values.first() {
        Some(&h0) if h0 >= 0.0 => values.iter().position(|&h| h < 0.0),
        _ => None,
    };
    Ok(HVector { values, sign_change })
}

/// `c * (sample - truth)`.
pub fn rescaled_a(sigma2_hat: f64, sigma2_true: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("aspect ratio must be positive, got {c}")));
    }
    Ok(c * (sigma2_hat - sigma2_true))
}

/// Sample-size condition for the forward shift at index `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub i: usize,
    /// Population index nearest the sample hint; the gap is taken there.
    pub i_star: usize,
    pub gap: f64,
    /// Right-hand side of `sqrt(n) >= rhs`.
    pub rhs: f64,
    pub rhs_squared: f64,
    /// `ceil(rhs^2)`.
    pub n_required: u64,
    pub satisfied: Option<bool>,
    pub c_universal: f64,
    pub epsilon: f64,
}

impl ConditionCheck {
    pub fn with_n(mut self, n: u64) -> Self {
        self.satisfied = Some((n as f64).sqrt() >= self.rhs);
        self
    }
}

/// `rhs = C * sigma_i / (eps * sqrt(gap)) * sqrt(sum_{j != i} sigma2_j / |sigma2_j - hint|)`,
/// where `hint` stands in for the matched sample eigenvalue and `gap` is the
/// population spectral gap at the index nearest to `hint`.
pub fn kl_condition(
    truth: &Spectrum,
    i: usize,
    sample_hint: f64,
    c_universal: f64,
    epsilon: f64,
) -> Result<ConditionCheck> {
    let p = truth.p();
    if p < 2 {
        return Err(Error::SingletonSpectrum);
    }
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(c_universal > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c_universal}")));
    }
    let t = truth.values();
    let i_star = match_index(sample_hint, truth)?;
    let gap = spectral_gap(truth, i_star)?;
    if gap <= 0.0 {
        return Err(Error::ZeroGap(i_star));
    }
    let mut acc = 0.0;
    for (j, &tj) in t.iter().enumerate() {
        if j != i {
            acc += tj / check_pole(j, tj, sample_hint)?.abs();
        }
    }
    let rhs = c_universal * t[i].sqrt() / (epsilon * gap.sqrt()) * acc.sqrt();
    let rhs_squared = rhs * rhs;
    Ok(ConditionCheck {
        i,
        i_star,
        gap,
        rhs,
        rhs_squared,
        n_required: rhs_squared.ceil() as u64,
        satisfied: None,
        c_universal,
        epsilon,
    })
}
