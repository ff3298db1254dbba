//! The one-dimension insertion problem: eigenvalues of an arrowhead matrix
//! `[[diag(nu), E], [E^T, E_ii]]` as roots of the secular equation
//! `f(y) = E_ii - sum_s E_s^2 / (nu_s - y) - y`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::PerturbationColumn;
use crate::spectrum::{first_interlacing_violation, Role, Spectrum};

/// Iteration cap per root.
pub const MAX_ITER: usize = 200;

/// Relative size below which a coupling `E_s` is treated as zero.
pub const DEFLATION_REL_TOL: f64 = 1e-14;

/// Relative tolerance of [`interlacing_check`].
pub const INTERLACING_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SecularProblem {
    /// Restricted spectrum, length `p - 1`.
    pub nu: Spectrum,
    pub e_diag: f64,
    /// Couplings aligned with `nu`.
    pub e_off: Vec<f64>,
    /// Floor of the bracket holding the smallest root.
    pub lower_bound: f64,
    /// Row of the inserted coordinate in [`arrowhead_oracle`].
    pub slot: usize,
}

#[derive(Serialize, Deserialize)]
struct ProblemRecord {
    nu: Vec<f64>,
    e_diag: f64,
    e_off: Vec<f64>,
}

impl SecularProblem {
    pub fn new(nu: Spectrum, e_diag: f64, e_off: Vec<f64>) -> Result<Self> {
        if e_off.len() != nu.p() {
            return Err(Error::SizeMismatch { expected: nu.p(), got: e_off.len() });
        }
        if !e_diag.is_finite() {
            return Err(Error::NonFinite(0));
        }
        if let Some(k) = e_off.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k + 1));
        }
        let mut prob = SecularProblem { nu, e_diag, e_off, lower_bound: 0.0, slot: 0 };
        prob.lower_bound = prob.default_lower_bound();
        Ok(prob)
    }

    pub fn from_column(col: &PerturbationColumn) -> Result<Self> {
        let mut prob = Self::new(col.nu.clone(), col.diag, col.off.clone())?;
        prob.slot = col.i.min(col.nu.p());
        Ok(prob)
    }

    /// Matrix size.
    pub fn p(&self) -> usize {
        self.nu.p() + 1
    }

    /// `max(nu_1, |E_ii|, max |E_s|)`.
    pub fn scale(&self) -> f64 {
        let e = self.e_off.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.nu.scale().max(self.e_diag.abs()).max(e)
    }

    fn abs_sum(&self) -> f64 {
        self.e_off.iter().map(|v| v.abs()).sum()
    }

    /// Whether the arrowhead matrix is positive semidefinite (Schur
    /// complement test on the `E_ii` entry).
    pub fn is_psd(&self) -> bool {
        let mut schur = 0.0;
        for (&v, &e) in self.nu.values().iter().zip(&self.e_off) {
            if e == 0.0 {
                continue;
            }
            if v <= 0.0 {
                return false;
            }
            schur += e * e / v;
        }
        self.e_diag >= schur
    }

    /// Gershgorin lower bound, lifted to zero for semidefinite problems.
    pub fn default_lower_bound(&self) -> f64 {
        let row_min = self
            .nu
            .values()
            .iter()
            .zip(&self.e_off)
            .fold(f64::INFINITY, |m, (v, e)| m.min(v - e.abs()));
        let g = row_min.min(self.e_diag - self.abs_sum());
        if self.is_psd() {
            g.max(0.0)
        } else {
            g
        }
    }

    /// `nu_1 + |E_ii| + sum |E_s|`.
    pub fn upper_bound(&self) -> f64 {
        self.nu.scale().max(0.0) + self.e_diag.abs() + self.abs_sum()
    }

    /// JSON `{nu, e_diag, e_off}`.
    pub fn to_json(&self) -> String {
        let rec = ProblemRecord {
            nu: self.nu.values().to_vec(),
            e_diag: self.e_diag,
            e_off: self.e_off.clone(),
        };
        serde_json::to_string(&rec).expect("plain record serializes")
    }

    /// Inverse of [`SecularProblem::to_json`]. `nu` must already be
    /// descending so that `e_off` stays aligned with it.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: ProblemRecord = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("secular problem json: {e}")))?;
        if rec.nu.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("nu must be descending".into()));
        }
        let nu = Spectrum::new(&rec.nu, Role::Restricted)?;
        Self::new(nu, rec.e_diag, rec.e_off)
    }
}

/// `E_ii - sum_s E_s^2 / (nu_s - y) - y`. Terms with `E_s = 0` are skipped.
pub fn secular_function(y: f64, prob: &SecularProblem) -> Result<f64> {
    let mut acc = prob.e_diag - y;
    for (s, (&v, &e)) in prob.nu.values().iter().zip(&prob.e_off).enumerate() {
        if e == 0.0 {
            continue;
        }
        let d = v - y;
        if d == 0.0 {
            return Err(Error::PoleHit { index: s, value: v, z: y });
        }
        acc -= e * e / d;
    }
    Ok(acc)
}

/// Reduced problem after deflation: distinct poles with positive weights.
struct Reduced {
    poles: Vec<f64>,
    weights: Vec<f64>,
    e_diag: f64,
}

impl Reduced {
    /// `(f(y), f'(y))`.
    fn eval(&self, y: f64) -> (f64, f64) {
        let mut f = self.e_diag - y;
        let mut df = -1.0;
        for (&d, &w) in self.poles.iter().zip(&self.weights) {
            let t = 1.0 / (d - y);
            f -= w * t;
            df -= w * t * t;
        }
        (f, df)
    }

    /// Root of a function decreasing from `+` at `lo` to `-` at `hi`.
    fn root(&self, index: usize, lo: f64, hi: f64, scale: f64) -> Result<f64> {
        let (mut a, mut b) = (lo, hi);
        let ftol = 1e-12 * scale;
        let wtol = 1e-14 * scale;
        let mut y = 0.5 * (a + b);
        let mut last_f = f64::INFINITY;
        for _ in 0..MAX_ITER {
            let (f, df) = self.eval(y);
            if f == 0.0 {
                return Ok(y);
            }
            // f' <= -1, so the root lies within |f| of y
            if f > 0.0 {
                a = y;
                b = b.min(y + f);
            } else {
                b = y;
                a = a.max(y + f);
            }
            let step = f / df;
            if b - a <= wtol || (f.abs() <= ftol && step.abs() <= wtol) {
                return Ok(y);
            }
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                // bracket cannot shrink further in floating point
                return Ok(y);
            }
            let newton = y - step;
            let ok = newton > a && newton < b && f.abs() <= 0.5 * last_f;
            last_f = f.abs();
            y = if ok { newton } else { mid };
        }
        Err(Error::NoConvergence(format!(
            "secular root {index} in [{lo}, {hi}] after {MAX_ITER} iterations"
        )))
    }
}

/// All `p` eigenvalues of the arrowhead matrix, descending.
///
/// Couplings below `1e-14 * scale` are zeroed and tied poles are merged by a
/// rotation; each released pole is itself an eigenvalue. The remaining roots
/// are bracketed by consecutive poles plus the upper and lower bounds and
/// found by bisection with Newton acceleration.
pub fn secular_solve(prob: &SecularProblem) -> Result<Spectrum> {
    let scale = prob.scale();
    if scale == 0.0 {
        return Ok(Spectrum::from_sorted_unchecked(vec![0.0; prob.p()], Role::Sample));
    }
    let nu = prob.nu.values();
    let tiny = DEFLATION_REL_TOL * scale;
    let mut roots = Vec::with_capacity(prob.p());
    let mut poles: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut s = 0;
    while s < nu.len() {
        // group of (numerically) tied poles
        let mut t = s + 1;
        while t < nu.len() && nu[s] - nu[t] <= tiny {
            t += 1;
        }
        let w: f64 = prob.e_off[s..t]
            .iter()
            .filter(|e| e.abs() >= tiny)
            .map(|e| e * e)
            .sum();
        if w > 0.0 {
            poles.push(nu[s]);
            weights.push(w);
            roots.extend(std::iter::repeat(nu[s]).take(t - s - 1));
        } else {
            roots.extend_from_slice(&nu[s..t]);
        }
        s = t;
    }
    let red = Reduced { poles, weights, e_diag: prob.e_diag };
    if red.poles.is_empty() {
        roots.push(prob.e_diag);
    } else {
        let m = red.poles.len();
        // top bracket
        let top = red.poles[0];
        let mut hi = prob.upper_bound().max(top + tiny);
        let mut tries = 0;
        while red.eval(hi).0 >= 0.0 {
            hi = top + 2.0 * (hi - top);
            tries += 1;
            if tries > 60 {
                return Err(Error::BracketFailure { index: 0, lo: top, hi });
            }
        }
        roots.push(red.root(0, top, hi, scale)?);
        for k in 1..m {
            roots.push(red.root(k, red.poles[k], red.poles[k - 1], scale)?);
        }
        // bottom bracket
        let bottom = red.poles[m - 1];
        let mut lo = prob.lower_bound.min(bottom);
        let fl = red.eval(lo).0;
        if lo == bottom || fl < 0.0 {
            // a caller-supplied floor that does not bracket: fall back
            lo = lo.min(prob.default_lower_bound()).min(bottom - tiny);
            let mut tries = 0;
            while red.eval(lo).0 < 0.0 {
                lo = bottom - 2.0 * (bottom - lo).max(tiny);
                tries += 1;
                if tries > 60 {
                    return Err(Error::BracketFailure { index: m, lo, hi: bottom });
                }
            }
        }
        if red.eval(lo).0 == 0.0 {
            roots.push(lo);
        } else {
            roots.push(red.root(m, lo, bottom, scale)?);
        }
    }
    // same round-off clamp as spectrum construction
    let tol = 1e-10 * scale;
    for r in roots.iter_mut() {
        if *r < 0.0 && *r >= -tol {
            *r = 0.0;
        }
    }
    roots.sort_by(|a, b| b.partial_cmp(a).expect("finite roots"));
    if let Some(&neg) = roots.iter().find(|r| **r < 0.0) {
        return Err(Error::NegativeEigenvalue { index: roots.len() - 1, value: neg, tol });
    }
    Ok(Spectrum::from_sorted_unchecked(roots, Role::Sample))
}

/// Dense arrowhead matrix: `nu` on the diagonal with the inserted
/// coordinate at row/column `slot`, couplings in that row and column and
/// `E_ii` on its diagonal entry.
pub fn arrowhead_oracle(prob: &SecularProblem) -> DMatrix<f64> {
    let p = prob.p();
    let slot = prob.slot.min(p - 1);
    let pos = |s: usize| if s < slot { s } else { s + 1 };
    let mut m = DMatrix::zeros(p, p);
    m[(slot, slot)] = prob.e_diag;
    for (s, (&v, &e)) in prob.nu.values().iter().zip(&prob.e_off).enumerate() {
        let r = pos(s);
        m[(r, r)] = v;
        m[(r, slot)] = e;
        m[(slot, r)] = e;
    }
    m
}

/// `full_1 >= nu_1 >= full_2 >= ... >= nu_{p-1} >= full_p`, with slack
/// `1e-12 * full_1`.
pub fn interlacing_check(full: &Spectrum, restricted: &Spectrum) -> Result<bool> {
    if full.p() != restricted.p() + 1 {
        return Err(Error::SizeMismatch { expected: restricted.p() + 1, got: full.p() });
    }
    Ok(first_interlacing_violation(full.values(), restricted.values()) == restricted.p())
}

/// Per-index movement of the full spectrum inside its interlacing bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalityProfile {
    /// `ratios[j] = min(|full_j - nu_j|, |full_j - nu_{j-1}|) / (nu_{j-1} - nu_j)`,
    /// in `[0, 1/2]`. At the two ends the single neighbouring pole and gap
    /// are used, capped at `1/2`.
    pub ratios: Vec<f64>,
    /// Index of the largest ratio; the middle one among ties.
    pub insertion_index: usize,
}

impl LocalityProfile {
    /// Share of indices `j` with `|j - center| > min_distance` whose ratio is
    /// below `threshold`.
    pub fn fraction_below(&self, threshold: f64, center: usize, min_distance: usize) -> f64 {
        let far: Vec<f64> = self
            .ratios
            .iter()
            .enumerate()
            .filter(|(j, _)| j.abs_diff(center) > min_distance)
            .map(|(_, r)| *r)
            .collect();
        if far.is_empty() {
            return 1.0;
        }
        far.iter().filter(|r| **r < threshold).count() as f64 / far.len() as f64
    }
}

/// Movement ratios of `full` against `restricted`. `i` is the index the new
/// coordinate was inserted at; it only has to be in range.
pub fn locality_profile(full: &Spectrum, restricted: &Spectrum, i: usize) -> Result<LocalityProfile> {
    if !interlacing_check(full, restricted)? {
        let at = first_interlacing_violation(full.values(), restricted.values());
        return Err(Error::InterlacingViolation(at));
    }
    let p = full.p();
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    let f = full.values();
    let nu = restricted.values();
    let ratio = |dist: f64, gap: f64| {
        if gap > 0.0 {
            (dist.abs() / gap).min(0.5)
        } else {
            0.0
        }
    };
    let ratios: Vec<f64> = (0..p)
        .map(|j| {
            if p == 1 {
                0.0
            } else if j == 0 {
                let gap = if nu.len() > 1 { nu[0] - nu[1] } else { nu[0] };
                ratio(f[0] - nu[0], gap)
            } else if j == p - 1 {
                let gap = if nu.len() > 1 { nu[j - 2] - nu[j - 1] } else { nu[0] };
                ratio(nu[j - 1] - f[j], gap)
            } else {
                let gap = nu[j - 1] - nu[j];
                ratio((f[j] - nu[j]).min(nu[j - 1] - f[j]), gap)
            }
        })
        .collect();
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..p).filter(|&j| ratios[j] == max).collect();
    let insertion_index = tied[(tied.len() - 1) / 2];
    Ok(LocalityProfile { ratios, insertion_index })
}
