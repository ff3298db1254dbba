//! Minimal standalone SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    SpectrumOverlay,
    ErrorVsC,
    DensityOverlay,
}

impl PlotKind {
    pub fn file_stem(&self) -> &'static str {
        match self {
            PlotKind::SpectrumOverlay => "spectrum_overlay",
            PlotKind::ErrorVsC => "error_vs_c",
            PlotKind::DensityOverlay => "density_overlay",
        }
    }

    fn log_log(&self) -> bool {
        matches!(self, PlotKind::ErrorVsC)
    }

    fn labels(&self) -> (&'static str, &'static str) {
        match self {
            PlotKind::SpectrumOverlay => ("index", "eigenvalue"),
            PlotKind::ErrorVsC => ("c", "mean interior error"),
            PlotKind::DensityOverlay => ("x", "density"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series { name: name.into(), x, y }
    }

    /// `y` against 1-based index.
    pub fn indexed(name: impl Into<String>, y: &[f64]) -> Self {
        let x = (1..=y.len()).map(|i| i as f64).collect();
        Series::new(name, x, y.to_vec())
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Least-squares slope of `log y` on `log x` over positive pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn validate(series: &[Series], log: bool) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptySeries("no series given".into()));
    }
    for s in series {
        if s.x.is_empty() {
            return Err(Error::EmptySeries(s.name.clone()));
        }
        if s.x.len() != s.y.len() {
            return Err(Error::SizeMismatch { expected: s.x.len(), got: s.y.len() });
        }
        if let Some(k) = s.x.iter().chain(&s.y).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k % s.x.len()));
        }
        if log && s.x.iter().chain(&s.y).any(|v| *v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "series `{}` has non-positive values on a log-log plot",
                s.name
            )));
        }
    }
    Ok(())
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(vals: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in vals {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|k| {
                let t = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                let label = if self.log { format_tick(10f64.powf(t)) } else { format_tick(t) };
                (k as f64 / 4.0, label)
            })
            .collect()
    }
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders the plot as SVG text. Output depends only on the inputs.
pub fn render_svg(series: &[Series], kind: PlotKind) -> Result<String> {
    let log = kind.log_log();
    validate(series, log)?;
    let xa = Axis::fit(series.iter().flat_map(|s| s.x.iter().copied()), log);
    let ya = Axis::fit(series.iter().flat_map(|s| s.y.iter().copied()), log);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |v: f64| MARGIN_L + xa.frac(v) * pw;
    let py = |v: f64| MARGIN_T + (1.0 - ya.frac(v)) * ph;
    let (xl, yl) = kind.labels();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, kind.file_stem());
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (f, label) in xa.ticks() {
        let x = MARGIN_L + f * pw;
        let yb = MARGIN_T + ph;
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, yb + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, yb + 18.0, escape(&label));
    }
    for (f, label) in ya.ticks() {
        let y = MARGIN_T + (1.0 - f) * ph;
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="black"/>"#, MARGIN_L - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_L - 8.0, y + 4.0, escape(&label));
    }
    let scale = if log { " (log)" } else { "" };
    let _ = writeln!(
        s,
        r#"<text class="xlabel" x="{:.2}" y="{:.2}" text-anchor="middle">{xl}{scale}</text>"#,
        MARGIN_L + 0.5 * pw,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text class="ylabel" x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{yl}{scale}</text>"#,
        MARGIN_T + 0.5 * ph,
        MARGIN_T + 0.5 * ph
    );

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (i, (x, y)) in ser.x.iter().zip(&ser.y).enumerate() {
            if i > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.2},{:.2}", px(*x), py(*y));
        }
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-name="{}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            escape(&ser.name)
        );
        if ser.x.len() == 1 {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(ser.x[0]),
                py(ser.y[0])
            );
        }
        let ly = MARGIN_T + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text class="legend" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.name)
        );
    }

    if log {
        if let Some(slope) = log_log_slope(&series[0].x, &series[0].y) {
            let _ = writeln!(
                s,
                r#"<text class="slope" data-slope="{slope:.4}" x="{:.2}" y="{:.2}">slope = {slope:.3}</text>"#,
                MARGIN_L + 10.0,
                MARGIN_T + 16.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the SVG to `path`.
pub fn emit_plot(series: &[Series], kind: PlotKind, path: &Path) -> Result<()> {
    let svg = render_svg(series, kind)?;
    std::fs::write(path, svg).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
