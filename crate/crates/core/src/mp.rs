//! Marchenko–Pastur reference law and a fixed-point solver for the limiting
//! Stieltjes transform of `Sigma^{1/2} N^T N Sigma^{1/2} / n` under a
//! discrete population measure.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::spectrum::format_float;

/// Damping of the fixed-point iteration.
pub const DAMPING: f64 = 0.5;
/// Convergence threshold on successive iterates, relative to `max(1, |m|)`.
pub const FP_TOL: f64 = 1e-12;
/// Iteration cap.
pub const FP_MAX_ITER: usize = 10_000;
/// Default imaginary offset for density curves.
pub const DEFAULT_ETA: f64 = 1e-3;

/// Marchenko–Pastur law with ratio `lambda = p / n = 1 / c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpLaw {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub point_mass: f64,
}

impl MpLaw {
    /// Law for aspect ratio `c = n / p`.
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("aspect ratio must be positive, got {c}")));
        }
        let lambda = 1.0 / c;
        let r = lambda.sqrt();
        Ok(MpLaw {
            lambda,
            a: (1.0 - r) * (1.0 - r),
            b: (1.0 + r) * (1.0 + r),
            point_mass: (1.0 - 1.0 / lambda).max(0.0),
        })
    }
}

/// Absolutely continuous part: `sqrt((b-x)(x-a)) / (2 pi lambda x)` on `[a, b]`.
pub fn mp_density(x: f64, law: &MpLaw) -> f64 {
    if x <= law.a || x >= law.b || x <= 0.0 {
        return 0.0;
    }
    ((law.b - x) * (x - law.a)).sqrt() / (2.0 * PI * law.lambda * x)
}

/// Distribution function, point mass at zero included. The continuous part
/// is integrated in `theta` with `x = mid + half * sin(theta)`, which removes
/// the square-root endpoints.
pub fn mp_cdf(x: f64, law: &MpLaw) -> Result<f64> {
    if x < 0.0 {
        return Ok(0.0);
    }
    if x >= law.b {
        return Ok(1.0);
    }
    if x <= law.a {
        return Ok(law.point_mass);
    }
    let half = 0.5 * (law.b - law.a);
    let mid = law.a + half;
    let scale = 1.0 / (2.0 * PI * law.lambda);
    let a = law.a;
    // density * dx/dtheta = half^2 (1-s)(1+s) / (2 pi lambda (a + half (1+s)))
    let g = move |theta: f64| {
        let s = theta.sin();
        let num = half * (1.0 - s);
        if a == 0.0 {
            scale * num
        } else {
            scale * num * half * (1.0 + s) / (a + half * (1.0 + s))
        }
    };
    let t1 = ((x - mid) / half).clamp(-1.0, 1.0).asin();
    let v = integrate(g, -PI / 2.0, t1, 1e-13)?;
    Ok((law.point_mass + v).clamp(0.0, 1.0))
}

/// Discrete population measure and aspect ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSpectrum {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
    pub c: f64,
}

impl LimitSpectrum {
    /// Weights are normalized to sum to one.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>, c: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        if atoms.len() != weights.len() {
            return Err(Error::SizeMismatch { expected: atoms.len(), got: weights.len() });
        }
        if atoms.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("atoms must be finite and non-negative".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("aspect ratio must be positive, got {c}")));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(LimitSpectrum { atoms, weights, c })
    }

    /// Equal weights on the given values (e.g. a realized population spectrum).
    pub fn uniform(atoms: &[f64], c: f64) -> Result<Self> {
        Self::new(atoms.to_vec(), vec![1.0; atoms.len()], c)
    }

    /// `int t / (1 + t m) dF(t)`.
    fn moment(&self, m: Complex64) -> Complex64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * t / (1.0 + t * m))
            .sum()
    }

    /// `| -1/m_c - z + (1/c) int t/(1 + t m_c) dF |` for a companion value.
    pub fn companion_residual(&self, z: Complex64, m_companion: Complex64) -> f64 {
        let y = 1.0 / self.c;
        (-1.0 / m_companion - z + y * self.moment(m_companion)).norm()
    }
}

/// Converged fixed point at `z = x + i eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub z: Complex64,
    /// Stieltjes transform of the `p x p` limit, `int dF(x) / (x - z)`.
    pub m: Complex64,
    /// Stieltjes transform of the `n x n` companion matrix.
    pub m_companion: Complex64,
    /// `Im(m) / pi`.
    pub density: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves for the companion transform with `y = p / n = 1 / c`:
/// `m_c <- (1 - w) m_c + w * (-1 / (z - y int t / (1 + t m_c) dF))`,
/// starting at `-1/z`, then recovers `m = (m_c + (1 - y) / z) / y`.
pub fn stieltjes_fixed_point(z_real: f64, eta: f64, spec: &LimitSpectrum) -> Result<FixedPoint> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let z = Complex64::new(z_real, eta);
    let y = 1.0 / spec.c;
    let mut mc = -1.0 / z;
    for it in 1..=FP_MAX_ITER {
        let target = -1.0 / (z - y * spec.moment(mc));
        let next = (1.0 - DAMPING) * mc + DAMPING * target;
        let step = (next - mc).norm();
        mc = next;
        if step < FP_TOL * mc.norm().max(1.0) {
            let m = (mc + (1.0 - y) / z) / y;
            let im = m.im;
            if im < -1e-10 * m.norm().max(1.0) {
                return Err(Error::NegativeDensity(im / PI));
            }
            return Ok(FixedPoint {
                z,
                m,
                m_companion: mc,
                density: im.max(0.0) / PI,
                iterations: it,
                residual: spec.companion_residual(z, mc),
            });
        }
    }
    Err(Error::NoConvergence(format!(
        "fixed point at z = {z_real} + {eta}i after {FP_MAX_ITER} iterations"
    )))
}

/// Densities on `grid`, evaluated in parallel.
pub fn density_curve(spec: &LimitSpectrum, grid: &[f64], eta: f64) -> Result<Vec<FixedPoint>> {
    grid.par_iter().map(|&x| stieltjes_fixed_point(x, eta, spec)).collect()
}

/// Two-column CSV `x,density`.
pub fn density_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("x,density\n");
    for (x, d) in points {
        out.push_str(&format!("{},{}\n", format_float(*x), format_float(*d)));
    }
    out
}
