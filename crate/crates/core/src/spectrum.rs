//! Ordered eigenvalue spectra and the small set of operations every
//! reconstruction formula is built from: gaps, nearest matches, truncated
//! Stieltjes sums, the one-insertion signed shift and KS distances.
//!
//! Indices are zero-based throughout the library. Spectra are always stored
//! in descending order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold separating "exact atom" from "too close to a pole".
pub const POLE_REL_TOL: f64 = 1e-14;

/// Default half-width of the exclusion window around the target index.
pub const DEFAULT_HALF_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Population (ground truth) eigenvalues.
    GroundTruth,
    /// Eigenvalues of the full sample covariance.
    Sample,
    /// Eigenvalues of the sample covariance with one column removed.
    Restricted,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::GroundTruth => "ground_truth",
            Role::Sample => "sample",
            Role::Restricted => "restricted",
        };
        f.write_str(s)
    }
}

/// A non-increasing sequence of non-negative eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    role: Role,
}

impl Spectrum {
    /// Validates, clamps and sorts `raw`. See [`sort_spectrum`].
    pub fn new(raw: &[f64], role: Role) -> Result<Self> {
        sort_spectrum(raw, role)
    }

    /// Wraps values that are already descending and non-negative.
    pub(crate) fn from_sorted_unchecked(values: Vec<f64>, role: Role) -> Self {
        debug_assert!(values.windows(2).all(|w| w[0] >= w[1]));
        Spectrum { values, role }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    /// Largest absolute value, zero for an empty spectrum.
    pub fn scale(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, t: f64) -> Spectrum {
        Spectrum {
            values: self.values.iter().map(|v| v * t).collect(),
            role: self.role,
        }
    }

    /// Sets values at or below `rel_tol * scale` to exactly zero, so that a
    /// rank-deficient spectrum carries its null space as a single atom.
    pub fn snap_near_zero(&self, rel_tol: f64) -> Spectrum {
        let tol = rel_tol * self.scale();
        Spectrum {
            values: self.values.iter().map(|&v| if v <= tol { 0.0 } else { v }).collect(),
            role: self.role,
        }
    }

    /// Number of exact zeros.
    pub fn zero_count(&self) -> usize {
        self.values.iter().rev().take_while(|&&v| v == 0.0).count()
    }

    /// Values in ascending order.
    pub fn ascending(&self) -> Vec<f64> {
        self.values.iter().rev().copied().collect()
    }

    /// One-column CSV with header `eigenvalue`, descending.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eigenvalue\n");
        for v in &self.values {
            out.push_str(&format_float(*v));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, role: Role) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("eigenvalue") => {}
            other => {
                return Err(Error::InvalidArgument(format!(
                    "expected header `eigenvalue`, found {other:?}"
                )))
            }
        }
        let raw = lines
            .enumerate()
            .map(|(k, l)| {
                l.trim().parse::<f64>().map_err(|e| {
                    Error::InvalidArgument(format!("line {}: {e}", k + 2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_spectrum(&raw, role)
    }

    /// JSON array of eigenvalues, descending.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.values).expect("f64 vector serializes")
    }

    pub fn from_json(text: &str, role: Role) -> Result<Self> {
        let raw: Vec<f64> = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("spectrum json: {e}")))?;
        sort_spectrum(&raw, role)
    }
}

impl Serialize for Spectrum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

/// Shortest round-trip representation, used for every emitted table.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Canonicalizes raw eigenvalues: descending, stable on ties, tiny negative
/// round-off clamped to zero.
///
/// Entries in `[-tol, 0)` with `tol = 1e-10 * max|raw|` become `0`; anything
/// more negative is rejected.
pub fn sort_spectrum(raw: &[f64], role: Role) -> Result<Spectrum> {
    if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let max_abs = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * max_abs;
    let mut values = Vec::with_capacity(raw.len());
    for (index, &v) in raw.iter().enumerate() {
        if v < -tol {
            return Err(Error::NegativeEigenvalue { index, value: v, tol });
        }
        values.push(if v < 0.0 { 0.0 } else { v });
    }
    // stable sort keeps original order among ties
    values.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
    Ok(Spectrum { values, role })
}

/// `min(v[i-1] - v[i], v[i] - v[i+1])`, one-sided at the ends.
pub fn spectral_gap(spec: &Spectrum, i: usize) -> Result<f64> {
    let v = spec.values();
    if v.len() < 2 {
        return Err(Error::SingletonSpectrum);
    }
    if i >= v.len() {
        return Err(Error::IndexOutOfRange { index: i, len: v.len() });
    }
    let above = (i > 0).then(|| v[i - 1] - v[i]);
    let below = (i + 1 < v.len()).then(|| v[i] - v[i + 1]);
    Ok(match (above, below) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("p >= 2"),
    })
}

/// Index of the sample eigenvalue closest to `target`; ties go to the
/// smaller index.
pub fn match_index(target: f64, sample: &Spectrum) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in sample.values().iter().enumerate() {
        let d = (target - v).abs();
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((j, d)),
        }
    }
    best.map(|(j, _)| j).ok_or(Error::EmptySpectrum)
}

/// The integer index band `[center - K, center + K]` clipped to the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub center: usize,
    pub half_width: usize,
}

impl ExclusionWindow {
    pub fn new(center: usize, half_width: usize) -> Self {
        ExclusionWindow { center, half_width }
    }

    pub fn lo(&self) -> usize {
        self.center.saturating_sub(self.half_width)
    }

    /// Inclusive upper end, before clipping to a particular length.
    pub fn hi(&self) -> usize {
        self.center.saturating_add(self.half_width)
    }

    pub fn contains(&self, s: usize) -> bool {
        s >= self.lo() && s <= self.hi()
    }

    /// Excluded indices within `0..p`.
    pub fn excluded(&self, p: usize) -> std::ops::Range<usize> {
        let lo = self.lo().min(p);
        let hi = (self.hi() + 1).min(p);
        lo..hi
    }
}

/// `(1/p) * sum_{s not in window} v_s / (v_s - z)`.
///
/// Without a window every exact atom `v_s == z` is skipped. A retained term
/// with `|v_s - z| < 1e-14 * v_s` is reported as [`Error::PoleHit`].
pub fn stieltjes_sum(spec: &Spectrum, z: f64, window: Option<&ExclusionWindow>) -> Result<f64> {
    let p = spec.p();
    if p == 0 {
        return Err(Error::EmptySpectrum);
    }
    let mut acc = 0.0;
    for (s, &v) in spec.values().iter().enumerate() {
        match window {
            Some(w) if w.contains(s) => continue,
            None if v == z => continue,
            _ => {}
        }
        let d = v - z;
        if d.abs() < POLE_REL_TOL * v.abs() || d == 0.0 {
            return Err(Error::PoleHit { index: s, value: v, z });
        }
        acc += v / d;
    }
    Ok(acc / p as f64)
}

/// Step function `G(x) = #{full <= x} - #{restricted <= x}`, which equals
/// `p * F_full(x) - (p - 1) * F_restricted(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignedSpectralShift {
    /// Merged eigenvalues of both spectra, ascending.
    pub breakpoints: Vec<f64>,
    /// `step_values[k]` is the value on `[breakpoints[k-1], breakpoints[k])`;
    /// the first entry covers `(-inf, breakpoints[0])`, the last
    /// `[breakpoints[last], inf)`.
    pub step_values: Vec<i64>,
}

impl SignedSpectralShift {
    pub fn eval(&self, x: f64) -> i64 {
        let k = self.breakpoints.partition_point(|&b| b <= x);
        self.step_values[k]
    }

    /// `G(+inf) - G(-inf)`.
    pub fn total_mass(&self) -> i64 {
        self.step_values[self.step_values.len() - 1] - self.step_values[0]
    }

    /// True when every interval of positive length carries 0 or 1 and
    /// consecutive positive-length intervals differ.
    pub fn alternates(&self) -> bool {
        let mut last: Option<i64> = Some(self.step_values[0]);
        for k in 1..self.step_values.len() {
            let left = self.breakpoints[k - 1];
            let right = self.breakpoints.get(k).copied().unwrap_or(f64::INFINITY);
            if right <= left {
                continue;
            }
            let v = self.step_values[k];
            if !(v == 0 || v == 1) || last == Some(v) {
                return false;
            }
            last = Some(v);
        }
        true
    }

    /// Integral of `G` over the intervals between the smallest and largest
    /// breakpoint.
    pub fn bounded_integral(&self) -> f64 {
        (1..self.breakpoints.len())
            .map(|k| self.step_values[k] as f64 * (self.breakpoints[k] - self.breakpoints[k - 1]))
            .sum()
    }
}

pub fn signed_shift(full: &Spectrum, restricted: &Spectrum) -> Result<SignedSpectralShift> {
    if full.p() != restricted.p() + 1 {
        return Err(Error::SizeMismatch { expected: restricted.p() + 1, got: full.p() });
    }
    let mut events: Vec<(f64, i64)> = full
        .values()
        .iter()
        .map(|&v| (v, 1))
        .chain(restricted.values().iter().map(|&v| (v, -1)))
        .collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let mut step_values = Vec::with_capacity(events.len() + 1);
    let mut level = 0;
    step_values.push(level);
    for &(_, d) in &events {
        level += d;
        step_values.push(level);
    }
    Ok(SignedSpectralShift {
        breakpoints: events.into_iter().map(|(v, _)| v).collect(),
        step_values,
    })
}

/// Relative position of `full[j]` inside its interlacing bracket,
/// `(full[j] - nu[j]) / (nu[j-1] - nu[j])`, for `1 <= j <= p - 2`.
pub fn shift_ratio(full: &Spectrum, restricted: &Spectrum, j: usize) -> Result<f64> {
    if !crate::secular::interlacing_check(full, restricted)? {
        let at = first_interlacing_violation(full.values(), restricted.values());
        return Err(Error::InterlacingViolation(at));
    }
    let p = full.p();
    if j == 0 || j + 1 >= p {
        return Err(Error::IndexOutOfRange { index: j, len: p });
    }
    let nu = restricted.values();
    let gap = nu[j - 1] - nu[j];
    if gap <= 0.0 {
        return Err(Error::ZeroGap(j));
    }
    Ok((full.values()[j] - nu[j]) / gap)
}

/// Same ratio written with ascending indices: `k`-th smallest full value
/// against the `(k-1)`-th and `k`-th smallest restricted values,
/// `(full_k - nu_k) / (nu_{k-1} - nu_k)`.
pub fn shift_ratio_ascending(full: &Spectrum, restricted: &Spectrum, k: usize) -> Result<f64> {
    if !crate::secular::interlacing_check(full, restricted)? {
        let at = first_interlacing_violation(full.values(), restricted.values());
        return Err(Error::InterlacingViolation(at));
    }
    let p = full.p();
    if k == 0 || k + 1 >= p {
        return Err(Error::IndexOutOfRange { index: k, len: p });
    }
    let f = full.ascending();
    let nu = restricted.ascending();
    let gap = nu[k - 1] - nu[k];
    if gap == 0.0 {
        return Err(Error::ZeroGap(k));
    }
    Ok((f[k] - nu[k]) / gap)
}

pub(crate) fn first_interlacing_violation(full: &[f64], nu: &[f64]) -> usize {
    let scale = full.first().copied().unwrap_or(0.0).abs().max(1e-300);
    let tol = 1e-12 * scale;
    for (s, &v) in nu.iter().enumerate() {
        if v > full[s] + tol || v < full[s + 1] - tol {
            return s;
        }
    }
    nu.len()
}

/// Kolmogorov–Smirnov distance between the empirical distribution of `spec`
/// and `reference_cdf`, evaluating both one-sided limits at every atom.
pub fn ks_distance<F: Fn(f64) -> f64>(spec: &Spectrum, reference_cdf: F) -> Result<f64> {
    if spec.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let xs = spec.ascending();
    let p = xs.len() as f64;
    let mut d = 0.0f64;
    let mut k = 0;
    while k < xs.len() {
        let x = xs[k];
        let mut m = k;
        while m < xs.len() && xs[m] == x {
            m += 1;
        }
        let below = k as f64 / p;
        let at = m as f64 / p;
        d = d.max((at - reference_cdf(x)).abs());
        d = d.max((below - reference_cdf(x.next_down())).abs());
        k = m;
    }
    Ok(d.min(1.0))
}

/// Right-continuous empirical CDF of a spectrum.
pub fn empirical_cdf(spec: &Spectrum) -> impl Fn(f64) -> f64 + '_ {
    let xs = spec.ascending();
    let p = xs.len() as f64;
    move |x| xs.partition_point(|&v| v <= x) as f64 / p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v, Role::Sample).unwrap()
    }

    #[test]
    fn sorts_descending() {
        assert_eq!(spec(&[3.0, 1.0, 2.0]).values(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn empty_is_fine() {
        let s = spec(&[]);
        assert_eq!(s.p(), 0);
    }

    #[test]
    fn clamps_round_off() {
        let s = spec(&[1e-17, 1.0, -1e-12]);
        assert_eq!(s.values(), &[1.0, 1e-17, 0.0]);
    }

    #[test]
    fn rejects_bad_entries() {
        assert_eq!(
            Spectrum::new(&[1.0, f64::NAN], Role::Sample).unwrap_err(),
            Error::NonFinite(1)
        );
        assert!(matches!(
            Spectrum::new(&[1.0, -0.5], Role::Sample),
            Err(Error::NegativeEigenvalue { index: 1, .. })
        ));
    }

    #[test]
    fn gaps() {
        let s = spec(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(spectral_gap(&s, 2).unwrap(), 1.0);
        assert_eq!(spectral_gap(&s, 0).unwrap(), 1.0);
        let s = spec(&[5.0, 4.5, 3.0, 2.0, 1.0]);
        assert_eq!(spectral_gap(&s, 1).unwrap(), 0.5);
        assert_eq!(spectral_gap(&spec(&[1.0]), 0), Err(Error::SingletonSpectrum));
        assert!(matches!(spectral_gap(&s, 5), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn nearest_match() {
        let s = spec(&[7.0, 6.0, 5.0, 4.5, 4.0, 3.0, 2.0]);
        assert_eq!(match_index(4.4, &s).unwrap(), 3);
        assert_eq!(match_index(4.0, &spec(&[4.0])).unwrap(), 0);
        // equidistant between 5 and 4 goes to the smaller index
        assert_eq!(match_index(4.5, &spec(&[5.0, 4.0])).unwrap(), 0);
        assert_eq!(match_index(1.0, &spec(&[])), Err(Error::EmptySpectrum));
    }

    #[test]
    fn stieltjes_hand_values() {
        assert_eq!(stieltjes_sum(&spec(&[2.0]), 1.0, None).unwrap(), 2.0);
        let s = spec(&[4.0, 2.0, 1.0]);
        assert!((stieltjes_sum(&s, 3.0, None).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(stieltjes_sum(&s, 0.0, None).unwrap(), 1.0);
        // exact atom skipped without a window
        let v = stieltjes_sum(&s, 2.0, None).unwrap();
        assert!((v - (4.0 / 2.0 + 1.0 / -1.0) / 3.0).abs() < 1e-15);
        // but not when a window is supplied that misses it
        let w = ExclusionWindow::new(0, 0);
        assert!(matches!(stieltjes_sum(&s, 2.0, Some(&w)), Err(Error::PoleHit { index: 1, .. })));
        // near-atom is a pole
        assert!(matches!(
            stieltjes_sum(&s, 2.0f64.next_up(), None),
            Err(Error::PoleHit { .. })
        ));
    }

    #[test]
    fn window_clipping() {
        let w = ExclusionWindow::new(1, 2);
        assert_eq!(w.excluded(10), 0..4);
        assert!(w.contains(1));
        assert_eq!(ExclusionWindow::new(9, 2).excluded(10), 7..10);
    }

    fn example4() -> (Spectrum, Spectrum) {
        let full = Spectrum::new(&[0.9, 1.9, 2.5, 3.3, 4.2, 5.2], Role::Sample).unwrap();
        let nu = Spectrum::new(&[1.0, 2.0, 3.0, 4.0, 5.0], Role::Restricted).unwrap();
        (full, nu)
    }

    #[test]
    fn snapping() {
        let s = spec(&[2.0, 1e-15, 3e-16, 0.0]);
        let z = s.snap_near_zero(1e-10);
        assert_eq!(z.values(), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(z.zero_count(), 3);
        assert_eq!(s.zero_count(), 1);
    }

    #[test]
    fn signed_shift_example_table() {
        let (full, nu) = example4();
        let g = signed_shift(&full, &nu).unwrap();
        let table = [
            (-10.0, 0), (0.95, 1), (1.5, 0), (1.95, 1), (2.2, 0), (2.7, 1),
            (3.1, 0), (3.6, 1), (4.1, 0), (4.5, 1), (5.1, 0), (9.0, 1),
        ];
        for (x, want) in table {
            assert_eq!(g.eval(x), want, "x = {x}");
        }
        assert!(g.alternates());
        assert_eq!(g.total_mass(), 1);
        assert!(matches!(signed_shift(&full, &full), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn pure_insertion_is_indicator() {
        let nu = spec(&[3.0, 2.0]).with_role(Role::Restricted);
        let full = spec(&[3.0, 2.0, 0.5]);
        let g = signed_shift(&full, &nu).unwrap();
        assert_eq!(g.eval(0.4), 0);
        assert_eq!(g.eval(0.5), 1);
        assert_eq!(g.eval(2.5), 1);
        assert_eq!(g.eval(100.0), 1);
    }

    #[test]
    fn ratios() {
        let full = spec(&[2.5, 1.9, 0.5]);
        let nu = spec(&[2.0, 1.0]).with_role(Role::Restricted);
        assert!((shift_ratio(&full, &nu, 1).unwrap() - 0.9).abs() < 1e-12);
        let full = spec(&[2.5, 1.0, 0.5]);
        assert_eq!(shift_ratio(&full, &nu, 1).unwrap(), 0.0);
        let (full, nu) = example4();
        assert!((shift_ratio_ascending(&full, &nu, 1).unwrap() - 0.1).abs() < 1e-12);
        let bad = spec(&[3.0, 2.0, 1.0]);
        let badnu = spec(&[4.0, 0.5]);
        assert!(matches!(shift_ratio(&bad, &badnu, 1), Err(Error::InterlacingViolation(_))));
        let tied = spec(&[2.0, 1.0, 1.0, 0.5]);
        let tiednu = spec(&[1.5, 1.0, 1.0]);
        assert_eq!(shift_ratio(&tied, &tiednu, 2), Err(Error::ZeroGap(2)));
    }

    #[test]
    fn ks_basics() {
        let s = spec(&[1.0]);
        assert_eq!(ks_distance(&s, |x| if x >= 2.0 { 1.0 } else { 0.0 }).unwrap(), 1.0);
        let s = spec(&[3.0, 1.0, 2.0, 2.0]);
        let f = empirical_cdf(&s);
        assert_eq!(ks_distance(&s, f).unwrap(), 0.0);
        // atoms at quantiles of the uniform law
        let p = 50;
        let q: Vec<f64> = (0..p).map(|k| (k as f64 + 0.5) / p as f64).collect();
        let s = spec(&q);
        let d = ks_distance(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d <= 1.0 / p as f64 + 1e-15);
        assert_eq!(ks_distance(&spec(&[]), |_| 0.0), Err(Error::EmptySpectrum));
    }

    #[test]
    fn csv_and_json() {
        let s = spec(&[0.1, 3.0, 2.0]);
        let csv = s.to_csv();
        assert!(csv.starts_with("eigenvalue\n3.0\n"));
        assert_eq!(Spectrum::from_csv(&csv, Role::Sample).unwrap(), s);
        assert_eq!(s.to_json(), "[3.0,2.0,0.1]");
        assert_eq!(Spectrum::from_json(&s.to_json(), Role::Sample).unwrap(), s);
    }
}
