//! Seeded Gaussian simulation: ground-truth models, data matrices, sample
//! covariances, the dense eigensolver and the one-column perturbation.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectrum::{Role, Spectrum};

/// Problem dimensions and master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentShape {
    pub p: usize,
    pub n: usize,
    /// Always `n / p`.
    pub c: f64,
    pub master_seed: u64,
}

impl ExperimentShape {
    pub fn new(p: usize, n: usize, master_seed: u64) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("need n, p >= 1 (n = {n}, p = {p})")));
        }
        Ok(ExperimentShape { p, n, c: n as f64 / p as f64, master_seed })
    }

    /// `n = round(c * p)`, at least 1. The stored `c` is recomputed from `n`.
    pub fn from_ratio(p: usize, c: f64, master_seed: u64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("aspect ratio must be positive, got {c}")));
        }
        let n = ((c * p as f64).round() as usize).max(1);
        Self::new(p, n, master_seed)
    }

    /// Same dimensions, seed of trial `t`.
    pub fn for_trial(&self, t: u64) -> Self {
        ExperimentShape { master_seed: rng::trial_seed(self.master_seed, t), ..*self }
    }
}

/// Population spectrum families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Identity,
    /// Evenly spaced between `lo` and `hi`.
    Linear { lo: f64, hi: f64 },
    /// Log-evenly spaced between `lo` and `hi`.
    Geometric { lo: f64, hi: f64 },
    /// A fraction `fraction` of the values at `v1`, the rest at `v2`.
    TwoCluster { v1: f64, v2: f64, fraction: f64 },
    Explicit(Vec<f64>),
}

/// How a model is turned into `p` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawMode {
    /// Deterministic quantile grid.
    Regular,
    /// i.i.d. draws from the model's distribution.
    Iid,
}

/// A model family plus draw mode, written `linear(1,10)` or `iid:linear(1,10)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub draw: DrawMode,
}

impl ModelSpec {
    pub fn regular(kind: ModelKind) -> Self {
        ModelSpec { kind, draw: DrawMode::Regular }
    }
}

fn fmt_args(f: &mut fmt::Formatter<'_>, name: &str, args: &[f64]) -> fmt::Result {
    write!(f, "{name}(")?;
    for (k, a) in args.iter().enumerate() {
        if k > 0 {
            f.write_str(",")?;
        }
        write!(f, "{a:?}")?;
    }
    f.write_str(")")
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Identity => f.write_str("identity"),
            ModelKind::Linear { lo, hi } => fmt_args(f, "linear", &[*lo, *hi]),
            ModelKind::Geometric { lo, hi } => fmt_args(f, "geometric", &[*lo, *hi]),
            ModelKind::TwoCluster { v1, v2, fraction } => {
                fmt_args(f, "two_cluster", &[*v1, *v2, *fraction])
            }
            ModelKind::Explicit(v) => fmt_args(f, "explicit", v),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.draw == DrawMode::Iid {
            f.write_str("iid:")?;
        }
        self.kind.fmt(f)
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("model `{s}`: {msg}"));
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(|| bad("missing `)`"))?;
                let args = inner
                    .split(',')
                    .filter(|a| !a.trim().is_empty())
                    .map(|a| a.trim().parse::<f64>().map_err(|e| bad(&e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        let want = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(bad(&format!("expected {k} arguments, got {}", args.len())))
            }
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "identity" => {
                want(0)?;
                ModelKind::Identity
            }
            "linear" => {
                want(2)?;
                ModelKind::Linear { lo: args[0], hi: args[1] }
            }
            "geometric" => {
                want(2)?;
                ModelKind::Geometric { lo: args[0], hi: args[1] }
            }
            "two_cluster" | "twocluster" => {
                want(3)?;
                ModelKind::TwoCluster { v1: args[0], v2: args[1], fraction: args[2] }
            }
            "explicit" => {
                if args.is_empty() {
                    return Err(bad("explicit needs at least one value"));
                }
                ModelKind::Explicit(args)
            }
            other => return Err(bad(&format!("unknown family `{other}`"))),
        };
        kind.validate().map_err(|e| bad(&e))?;
        Ok(kind)
    }
}

impl ModelKind {
    fn validate(&self) -> std::result::Result<(), String> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            ModelKind::Identity => Ok(()),
            ModelKind::Linear { lo, hi } | ModelKind::Geometric { lo, hi } => {
                if pos(*lo) && pos(*hi) && lo <= hi {
                    Ok(())
                } else {
                    Err("need 0 < lo <= hi".into())
                }
            }
            ModelKind::TwoCluster { v1, v2, fraction } => {
                if pos(*v1) && pos(*v2) && (0.0..=1.0).contains(fraction) {
                    Ok(())
                } else {
                    Err("need positive values and fraction in [0, 1]".into())
                }
            }
            ModelKind::Explicit(v) => {
                if v.iter().all(|x| pos(*x)) {
                    Ok(())
                } else {
                    Err("values must be positive".into())
                }
            }
        }
    }

    /// Value at quantile level `u` in `[0, 1]`, where `u = 0` is the top.
    fn quantile_desc(&self, u: f64) -> f64 {
        match self {
            ModelKind::Identity => 1.0,
            ModelKind::Linear { lo, hi } => hi - (hi - lo) * u,
            ModelKind::Geometric { lo, hi } => hi * (lo / hi).powf(u),
            ModelKind::TwoCluster { v1, v2, fraction } => {
                if u < *fraction {
                    *v1
                } else {
                    *v2
                }
            }
            ModelKind::Explicit(v) => {
                let k = ((u * v.len() as f64) as usize).min(v.len() - 1);
                v[k]
            }
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("iid:") {
            Some(rest) => Ok(ModelSpec { kind: rest.parse()?, draw: DrawMode::Iid }),
            None => Ok(ModelSpec::regular(s.parse()?)),
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A model together with its realized population spectrum. Column `j` of a
/// generated data matrix has variance `realized[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    pub spec: ModelSpec,
    realized: Spectrum,
}

impl GroundTruthModel {
    /// Realizes `spec` at dimension `p`. `seed` is only used by i.i.d. draws.
    pub fn new(spec: ModelSpec, p: usize, seed: u64) -> Result<Self> {
        if p == 0 {
            return Err(Error::EmptySpectrum);
        }
        let raw: Vec<f64> = match (&spec.kind, spec.draw) {
            (ModelKind::Explicit(v), DrawMode::Regular) => {
                if v.len() != p {
                    return Err(Error::ShapeMismatch(format!(
                        "explicit model has {} values, p = {p}",
                        v.len()
                    )));
                }
                v.clone()
            }
            (ModelKind::TwoCluster { v1, v2, fraction }, DrawMode::Regular) => {
                let m = (fraction * p as f64).round() as usize;
                (0..p).map(|k| if k < m { *v1 } else { *v2 }).collect()
            }
            (kind, DrawMode::Regular) => {
                let denom = (p.max(2) - 1) as f64;
                (0..p).map(|k| kind.quantile_desc(k as f64 / denom)).collect()
            }
            (kind, DrawMode::Iid) => {
                let mut u = rng::UniformStream::new(rng::domain_seed(seed, 1));
                (0..p).map(|_| kind.quantile_desc(u.next_f64())).collect()
            }
        };
        let realized = Spectrum::new(&raw, Role::GroundTruth)?;
        if realized.values().iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument("population variances must be positive".into()));
        }
        Ok(GroundTruthModel { spec, realized })
    }

    pub fn regular(kind: ModelKind, p: usize) -> Result<Self> {
        Self::new(ModelSpec::regular(kind), p, 0)
    }

    /// Wraps an already realized spectrum.
    pub fn explicit(values: &[f64]) -> Result<Self> {
        Self::regular(ModelKind::Explicit(values.to_vec()), values.len())
    }

    pub fn realized(&self) -> &Spectrum {
        &self.realized
    }
}

/// An `n x p` data matrix and the shape it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub entries: DMatrix<f64>,
    pub shape: ExperimentShape,
}

impl DataMatrix {
    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Little-endian binary: `SPRC`, u32 n, u32 p, 4 reserved bytes, then
    /// row-major f64 entries.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let (n, p) = (self.rows(), self.cols());
        let mut buf = Vec::with_capacity(16 + 8 * n * p);
        buf.extend_from_slice(b"SPRC");
        buf.extend_from_slice(&(n as u32).to_le_bytes());
        buf.extend_from_slice(&(p as u32).to_le_bytes());
        buf.extend_from_slice(&[0u8; 4]);
        for r in 0..n {
            for j in 0..p {
                buf.extend_from_slice(&self.entries[(r, j)].to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads the binary format back; the shape's seed is not stored and is
    /// set to zero.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..4] != b"SPRC" {
            return Err(Error::InvalidArgument("bad magic".into()));
        }
        let n = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let p = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let mut body = vec![0u8; 8 * n * p];
        r.read_exact(&mut body)?;
        let vals = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        let entries = DMatrix::from_row_iterator(n, p, vals);
        Ok(DataMatrix { entries, shape: ExperimentShape::new(p, n, 0)? })
    }

    /// CSV with header `x1,...,xp`, one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = (1..=self.cols()).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for r in 0..self.rows() {
            let row: Vec<String> = (0..self.cols())
                .map(|j| crate::spectrum::format_float(self.entries[(r, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Draws `X = N * Sigma^{1/2}`; entry `(r, j)` depends only on the seed, `r`
/// and `j`. No centering.
pub fn gen_data_matrix(shape: &ExperimentShape, model: &GroundTruthModel) -> Result<DataMatrix> {
    let sigma = model.realized().values();
    if sigma.len() != shape.p {
        return Err(Error::ShapeMismatch(format!(
            "model has {} values, shape has p = {}",
            sigma.len(),
            shape.p
        )));
    }
    let sd: Vec<f64> = sigma.iter().map(|v| v.sqrt()).collect();
    let mut entries = DMatrix::zeros(shape.n, shape.p);
    let mut row = vec![0.0; shape.p];
    for r in 0..shape.n {
        rng::row_normals(shape.master_seed, r as u64, &mut row);
        for j in 0..shape.p {
            entries[(r, j)] = row[j] * sd[j];
        }
    }
    Ok(DataMatrix { entries, shape: *shape })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for k in j + 1..p {
            let v = 0.5 * (m[(j, k)] + m[(k, j)]);
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
}

/// `X^T X / n`, exactly symmetric.
pub fn sample_covariance(x: &DataMatrix) -> DMatrix<f64> {
    let mut s = x.entries.tr_mul(&x.entries) / x.rows() as f64;
    symmetrize(&mut s);
    s
}

/// Same with column means removed first (still divided by `n`).
pub fn sample_covariance_centered(x: &DataMatrix) -> DMatrix<f64> {
    let mut centered = x.entries.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let mut s = centered.tr_mul(&centered) / x.rows() as f64;
    symmetrize(&mut s);
    s
}

/// Descending eigenvalues and, optionally, matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

impl SymEigen {
    pub fn spectrum(&self, role: Role) -> Result<Spectrum> {
        Spectrum::new(&self.values, role)
    }
}

/// Dense symmetric eigendecomposition (Householder tridiagonalization plus
/// implicit QR).
pub fn sym_eigen(m: &DMatrix<f64>, want_vectors: bool) -> Result<SymEigen> {
    let p = m.nrows();
    if m.ncols() != p {
        return Err(Error::ShapeMismatch(format!("{}x{} is not square", p, m.ncols())));
    }
    if let Some(k) = m.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(k));
    }
    if p == 0 {
        return Ok(SymEigen { values: vec![], vectors: want_vectors.then(|| m.clone()) });
    }
    let norm = m.amax();
    let mut asym = 0.0f64;
    for j in 0..p {
        for k in j + 1..p {
            asym = asym.max((m[(j, k)] - m[(k, j)]).abs());
        }
    }
    if asym > 1e-12 * norm {
        return Err(Error::NotSymmetric(asym / norm));
    }
    let cap = 100 * p.max(1);
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, cap)
        .ok_or_else(|| Error::NoConvergence(format!("symmetric eigensolver exceeded {cap} iterations")))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite"));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = want_vectors.then(|| {
        DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])])
    });
    Ok(SymEigen { values, vectors })
}

/// The `i`-th row/column of the sample covariance seen from the eigenbasis
/// of the covariance with column `i` removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationColumn {
    pub i: usize,
    /// `E_ii = sum_r X_ri^2 / n`.
    pub diag: f64,
    /// `E_si`, aligned with `nu`.
    pub off: Vec<f64>,
    pub nu: Spectrum,
}

/// Builds the perturbation column from a data matrix.
pub fn perturbation_column(x: &DataMatrix, i: usize) -> Result<PerturbationColumn> {
    perturbation_from_covariance(&sample_covariance(x), i)
}

/// Same, starting from the full sample covariance.
///
/// Zeroing column `i` of the data leaves a covariance whose only extra
/// eigenpair is `(0, e_i)`, so the structural zero is dropped by working on
/// the principal submatrix without row and column `i`.
pub fn perturbation_from_covariance(s: &DMatrix<f64>, i: usize) -> Result<PerturbationColumn> {
    let p = s.nrows();
    if i >= p {
        return Err(Error::IndexOutOfRange { index: i, len: p });
    }
    if p < 2 {
        return Err(Error::SingletonSpectrum);
    }
    let sub = s.clone().remove_row(i).remove_column(i);
    let col: Vec<f64> = (0..p).filter(|&k| k != i).map(|k| s[(k, i)]).collect();
    let eig = sym_eigen(&sub, true)?;
    let v = eig.vectors.as_ref().expect("requested vectors");
    let off = (0..p - 1)
        .map(|c| (0..p - 1).map(|r| v[(r, c)] * col[r]).sum())
        .collect();
    Ok(PerturbationColumn { i, diag: s[(i, i)], off, nu: eig.spectrum(Role::Restricted)? })
}

/// Scalar reductions available to [`mc_ensemble`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    TopEigenvalue,
    BottomEigenvalue,
    Trace,
    MeanEigenvalue,
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "top_eigenvalue" => Statistic::TopEigenvalue,
            "bottom_eigenvalue" => Statistic::BottomEigenvalue,
            "trace" => Statistic::Trace,
            "mean_eigenvalue" => Statistic::MeanEigenvalue,
            other => return Err(Error::UnknownStatistic(other.to_string())),
        })
    }
}

impl Statistic {
    fn eval(&self, spec: &Spectrum) -> f64 {
        let v = spec.values();
        match self {
            Statistic::TopEigenvalue => v[0],
            Statistic::BottomEigenvalue => v[v.len() - 1],
            Statistic::Trace => v.iter().sum(),
            Statistic::MeanEigenvalue => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// Summary of a sample of per-trial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator), 0 for one value.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// `(level, value)` pairs at 5, 25, 50, 75 and 95 percent.
    pub quantiles: Vec<(f64, f64)>,
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    quantile_sorted(&v, 0.5)
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySeries("summary".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
            .iter()
            .map(|&q| (q, quantile_sorted(&sorted, q)))
            .collect();
        Ok(Summary { mean, sd, min: sorted[0], max: sorted[sorted.len() - 1], quantiles })
    }

    pub fn median(&self) -> f64 {
        self.quantiles[2].1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub shape: ExperimentShape,
    pub model: ModelSpec,
    pub statistic: Statistic,
}

/// Output of [`mc_ensemble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub config: EnsembleConfig,
    pub trials: usize,
    /// Per-trial values in trial order.
    pub values: Vec<f64>,
    pub statistics: Summary,
}

/// Runs `f(trial, trial_seed)` for every trial in parallel and returns the
/// results in trial order.
pub fn mc_map<T, F>(master_seed: u64, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, u64) -> Result<T> + Sync,
{
    (0..trials as u64)
        .into_par_iter()
        .map(|t| f(t, rng::trial_seed(master_seed, t)))
        .collect()
}

/// Monte Carlo distribution of a scalar statistic of the sample spectrum.
pub fn mc_ensemble(
    shape: &ExperimentShape,
    model: &GroundTruthModel,
    trials: usize,
    statistic: &str,
) -> Result<EnsembleRecord> {
    let stat: Statistic = statistic.parse()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let values = mc_map(shape.master_seed, trials, |t, _| {
        let x = gen_data_matrix(&shape.for_trial(t), model)?;
        let spec = sym_eigen(&sample_covariance(&x), false)?.spectrum(Role::Sample)?;
        Ok(stat.eval(&spec))
    })?;
    let statistics = Summary::of(&values)?;
    Ok(EnsembleRecord {
        config: EnsembleConfig { shape: *shape, model: model.spec.clone(), statistic: stat },
        trials,
        values,
        statistics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(p: usize, n: usize, seed: u64) -> ExperimentShape {
        ExperimentShape::new(p, n, seed).unwrap()
    }

    fn col_var(x: &DataMatrix, j: usize) -> f64 {
        x.entries.column(j).iter().map(|v| v * v).sum::<f64>() / x.rows() as f64
    }

    #[test]
    fn model_strings_round_trip() {
        for s in ["identity", "linear(1.0,10.0)", "iid:geometric(1.0,100.0)", "two_cluster(4.0,1.0,0.25)", "explicit(3.0,2.0)"] {
            let m: ModelSpec = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("linear(1)".parse::<ModelSpec>().is_err());
        assert!("linear(10,1)".parse::<ModelSpec>().is_err());
        assert!("cubic(1,2)".parse::<ModelSpec>().is_err());
    }

    #[test]
    fn realizations() {
        let m = GroundTruthModel::regular(ModelKind::Identity, 4).unwrap();
        assert_eq!(m.realized().values(), &[1.0; 4]);
        let m = GroundTruthModel::regular(ModelKind::Linear { lo: 1.0, hi: 10.0 }, 10).unwrap();
        assert_eq!(m.realized().values()[0], 10.0);
        assert_eq!(m.realized().values()[9], 1.0);
        let m = GroundTruthModel::regular(ModelKind::TwoCluster { v1: 4.0, v2: 1.0, fraction: 0.25 }, 8).unwrap();
        assert_eq!(m.realized().values(), &[4.0, 4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let spec: ModelSpec = "iid:linear(1,10)".parse().unwrap();
        let a = GroundTruthModel::new(spec.clone(), 50, 3).unwrap();
        let b = GroundTruthModel::new(spec, 50, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.realized().values().iter().all(|&v| (1.0..=10.0).contains(&v)));
        assert!(matches!(
            GroundTruthModel::regular(ModelKind::Explicit(vec![1.0]), 2),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn determinism() {
        let m = GroundTruthModel::regular(ModelKind::Linear { lo: 1.0, hi: 10.0 }, 5).unwrap();
        let a = gen_data_matrix(&shape(5, 30, 11), &m).unwrap();
        let b = gen_data_matrix(&shape(5, 30, 11), &m).unwrap();
        assert_eq!(a, b);
        let c = gen_data_matrix(&shape(5, 30, 12), &m).unwrap();
        assert_ne!(a, c);
        // entry (r, j) is independent of n
        let d = gen_data_matrix(&shape(5, 10, 11), &m).unwrap();
        assert_eq!(a.entries.rows(0, 10), d.entries);
        let bad = GroundTruthModel::regular(ModelKind::Identity, 4).unwrap();
        assert!(matches!(gen_data_matrix(&shape(5, 3, 0), &bad), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn column_variances() {
        let id = GroundTruthModel::regular(ModelKind::Identity, 2).unwrap();
        let x = gen_data_matrix(&shape(2, 100_000, 1), &id).unwrap();
        for j in 0..2 {
            assert!((0.98..=1.02).contains(&col_var(&x, j)));
        }
        let lin = GroundTruthModel::regular(ModelKind::Linear { lo: 1.0, hi: 10.0 }, 10).unwrap();
        let x = gen_data_matrix(&shape(10, 100_000, 2), &lin).unwrap();
        assert!((col_var(&x, 0) / 10.0 - 1.0).abs() < 0.03);
        assert!((col_var(&x, 9) - 1.0).abs() < 0.03);
    }

    #[test]
    fn covariance_cases() {
        let mut e = DMatrix::zeros(1, 3);
        e[(0, 0)] = 1.0;
        let x = DataMatrix { entries: e, shape: shape(3, 1, 0) };
        let s = sample_covariance(&x);
        assert_eq!(s[(0, 0)], 1.0);
        assert_eq!(s.iter().filter(|v| **v != 0.0).count(), 1);
        let z = DataMatrix { entries: DMatrix::zeros(4, 3), shape: shape(3, 4, 0) };
        assert!(sample_covariance(&z).iter().all(|v| *v == 0.0));
        let m = GroundTruthModel::regular(ModelKind::Linear { lo: 1.0, hi: 3.0 }, 6).unwrap();
        let x = gen_data_matrix(&shape(6, 20, 5), &m).unwrap();
        let s = sample_covariance(&x);
        assert_eq!(s, s.transpose());
        let ev = sym_eigen(&s, false).unwrap();
        let tr = s.trace();
        assert!(ev.values.iter().all(|&v| v >= -1e-10 * tr));
        let sc = sample_covariance_centered(&x);
        assert!(sc.trace() <= tr);
    }

    #[test]
    fn eigen_cases() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(sym_eigen(&d, false).unwrap().values, vec![3.0, 2.0, 1.0]);
        let id = DMatrix::<f64>::identity(5, 5);
        assert_eq!(sym_eigen(&id, false).unwrap().values, vec![1.0; 5]);
        let mut u = rng::UniformStream::new(4);
        let a = DMatrix::from_fn(8, 8, |_, _| u.next_f64() - 0.5);
        let m = &a + a.transpose();
        let e = sym_eigen(&m, true).unwrap();
        let v = e.vectors.unwrap();
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()));
        let rec = &v * l * v.transpose();
        assert!((rec - &m).amax() < 1e-9);
        assert!((v.transpose() * &v - DMatrix::identity(8, 8)).amax() < 1e-10);
        let mut bad = m.clone();
        bad[(0, 1)] += 1e-3;
        assert!(matches!(sym_eigen(&bad, false), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn rank_deficiency() {
        let m = GroundTruthModel::regular(ModelKind::Identity, 30).unwrap();
        let x = gen_data_matrix(&shape(30, 12, 8), &m).unwrap();
        let s = sample_covariance(&x);
        let thr = 1e-8 * s.trace() / 30.0;
        let ev = sym_eigen(&s, false).unwrap();
        assert_eq!(ev.values.iter().filter(|v| **v < thr).count(), 18);
    }

    #[test]
    fn ab_ba_spectra_agree() {
        // X^T X / n against Sigma^{1/2} N^T N Sigma^{1/2} / n built separately
        let m = GroundTruthModel::regular(ModelKind::Geometric { lo: 0.5, hi: 8.0 }, 7).unwrap();
        let sh = shape(7, 15, 21);
        let x = gen_data_matrix(&sh, &m).unwrap();
        let id = GroundTruthModel::regular(ModelKind::Identity, 7).unwrap();
        let nmat = gen_data_matrix(&sh, &id).unwrap().entries;
        let ntn = nmat.tr_mul(&nmat) / 15.0;
        let sig = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(m.realized().values().to_vec()));
        let prod = &ntn * &sig;
        let mut prod_eigs: Vec<f64> = prod.complex_eigenvalues().iter().map(|z| z.re).collect();
        prod_eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let direct = sym_eigen(&sample_covariance(&x), false).unwrap().values;
        for (a, b) in direct.iter().zip(&prod_eigs) {
            assert!((a - b).abs() <= 1e-9 * direct[0]);
        }
    }

    #[test]
    fn decoupled_perturbation() {
        let mut e = DMatrix::zeros(5, 2);
        for r in 0..5 {
            e[(r, 0)] = r as f64 + 1.0;
        }
        let x = DataMatrix { entries: e, shape: shape(2, 5, 0) };
        let pc = perturbation_column(&x, 0).unwrap();
        assert_eq!(pc.nu.values(), &[0.0]);
        assert_eq!(pc.off, vec![0.0]);
        assert!((pc.diag - 55.0 / 5.0).abs() < 1e-14);
        assert!(matches!(perturbation_column(&x, 2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn perturbation_matches_rotation() {
        let m = GroundTruthModel::regular(ModelKind::Linear { lo: 1.0, hi: 4.0 }, 6).unwrap();
        let x = gen_data_matrix(&shape(6, 40, 3), &m).unwrap();
        let pc = perturbation_column(&x, 2).unwrap();
        assert_eq!(pc.off.len(), 5);
        // |E|^2 is basis independent
        let s = sample_covariance(&x);
        let direct: f64 = (0..6).filter(|&k| k != 2).map(|k| s[(k, 2)].powi(2)).sum();
        let rotated: f64 = pc.off.iter().map(|v| v * v).sum();
        assert!((direct - rotated).abs() < 1e-12 * direct);
    }

    #[test]
    fn coupling_variance_and_mean_of_diag() {
        let p = 20;
        let trials = 10_000;
        let i = 4;
        let m = GroundTruthModel::regular(ModelKind::Identity, p).unwrap();
        // exact normals; the +-0.04 band is about 2.8 sd per index
        let seed = 0;
        let base = shape(p, 100, seed);
        let rows = mc_map(seed, trials, |t, _| {
            let pc = perturbation_column(&gen_data_matrix(&base.for_trial(t), &m)?, i)?;
            let z: Vec<f64> = pc
                .off
                .iter()
                .zip(pc.nu.values())
                .map(|(e, nu)| e / (nu / 100.0).sqrt())
                .collect();
            Ok((z, pc.diag))
        })
        .unwrap();
        for s in 0..p - 1 {
            let v = rows.iter().map(|(z, _)| z[s] * z[s]).sum::<f64>() / trials as f64;
            assert!((0.96..=1.04).contains(&v), "s = {s}: {v}");
        }
        let mean_diag = rows.iter().map(|(_, d)| d).sum::<f64>() / trials as f64;
        assert!((mean_diag - 1.0).abs() < 0.02);
    }

    #[test]
    fn ensemble() {
        let m = GroundTruthModel::regular(ModelKind::Identity, 200).unwrap();
        let sh = shape(200, 200, 5);
        let rec = mc_ensemble(&sh, &m, 4, "top_eigenvalue").unwrap();
        assert!((rec.statistics.mean / 4.0 - 1.0).abs() < 0.1);
        let one = mc_ensemble(&sh, &m, 1, "trace").unwrap();
        assert_eq!(one.statistics.mean, one.values[0]);
        assert_eq!(one.statistics.median(), one.values[0]);
        assert_eq!(
            mc_ensemble(&sh, &m, 1, "bogus").unwrap_err(),
            Error::UnknownStatistic("bogus".into())
        );
    }

    #[test]
    fn ensemble_ignores_thread_count() {
        let m = GroundTruthModel::regular(ModelKind::Linear { lo: 1.0, hi: 2.0 }, 10).unwrap();
        let sh = shape(10, 20, 9);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_ensemble(&sh, &m, 16, "top_eigenvalue").unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn binary_round_trip() {
        let m = GroundTruthModel::regular(ModelKind::Identity, 3).unwrap();
        let x = gen_data_matrix(&shape(3, 4, 1), &m).unwrap();
        let mut buf = Vec::new();
        x.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 12);
        assert_eq!(&buf[..4], b"SPRC");
        let back = DataMatrix::read_binary(&buf[..]).unwrap();
        assert_eq!(back.entries, x.entries);
        assert!(x.to_csv().starts_with("x1,x2,x3\n"));
    }
}
