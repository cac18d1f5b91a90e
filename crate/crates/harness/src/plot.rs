//! Self-contained SVG charts of stored runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{HarnessError, Result};
use crate::io::{parse_steps, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Residual against step on a log axis.
    Residual,
    /// Correct rate against step on a linear axis.
    CorrectRate,
    /// Scatter of measured sigma against `q` from a spectral sweep summary.
    SigmaVsQ,
}

impl FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "residual" => Ok(Self::Residual),
            "correct-rate" => Ok(Self::CorrectRate),
            "sigma-vs-q" => Ok(Self::SigmaVsQ),
            _ => Err(format!("unknown plot kind `{s}` (one of residual, correct-rate, sigma-vs-q)")),
        }
    }
}

/// One named series of finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn label_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Read `(q, sigma)` pairs from a CSV whose header names both columns.
fn read_sigma_sweep(path: &Path, text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| HarnessError::Schema {
            path: path.to_path_buf(),
            msg: format!("no `{name}` column in header `{}`", header.join(",")),
        })
    };
    let (qi, si) = (col("q")?, col("sigma")?);
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let get = |i: usize| {
                f.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| HarnessError::Schema {
                    path: path.to_path_buf(),
                    msg: format!("malformed row `{l}`"),
                })
            };
            Ok((get(qi)?, get(si)?))
        })
        .collect()
}

/// Load the series a plot of `kind` draws from `paths`.
pub fn load_series(paths: &[PathBuf], kind: PlotKind) -> Result<Vec<Series>> {
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            let points = match kind {
                PlotKind::SigmaVsQ => read_sigma_sweep(p, &text)?,
                PlotKind::Residual => {
                    parse_steps(p, &text)?.iter().map(|s| (s.t as f64, s.residual)).filter(|&(_, y)| y > 0.0 && y.is_finite()).collect()
                }
                PlotKind::CorrectRate => {
                    parse_steps(p, &text)?.iter().map(|s| (s.t as f64, s.correct_rate)).filter(|&(_, y)| y.is_finite()).collect()
                }
            };
            Ok(Series { label: label_of(p), points })
        })
        .collect()
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render series as an SVG document.
pub fn render_svg(series: &[Series], kind: PlotKind) -> String {
    let log_y = kind == PlotKind::Residual;
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (mut y0, mut y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| ty(p.1))));
    if log_y {
        y0 = y0.floor();
        y1 = y1.ceil().max(y0 + 1.0);
    } else if kind == PlotKind::CorrectRate {
        (y0, y1) = (y0.min(0.0), y1.max(1.0));
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph;
    let (x_label, y_label) = match kind {
        PlotKind::Residual => ("step t", "residual (log10)"),
        PlotKind::CorrectRate => ("step t", "correct rate"),
        PlotKind::SigmaVsQ => ("q = k/d", "sigma"),
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (gx, gy) = (LEFT + f * pw, TOP + (1.0 - f) * ph);
        let ytext = if log_y { format!("1e{yv:.0}") } else { format!("{yv:.3}") };
        let _ = writeln!(s, r##"<line x1="{gx:.2}" y1="{TOP}" x2="{gx:.2}" y2="{:.2}" stroke="#ddd"/>"##, TOP + ph);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{gy:.2}" x2="{:.2}" y2="{gy:.2}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{gx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, format_tick(xv));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{ytext}</text>"#, LEFT - 6.0, gy + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#, LEFT + pw / 2.0, H - 10.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_label}</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if kind == PlotKind::SigmaVsQ {
            for &(x, y) in &ser.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.6"/>"#, px(x), py(y));
            }
        } else if !ser.points.is_empty() {
            let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="4" fill="{color}"/>"#, ly - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 20.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Read `paths`, draw one series per file, write the SVG to `out`.
pub fn emit_plot(paths: &[PathBuf], kind: PlotKind, out: &Path) -> Result<()> {
    let series = load_series(paths, kind)?;
    write_atomic(out, &render_svg(&series, kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descending_series_renders() {
        let ser = Series { label: "a<b".into(), points: (0..5).map(|t| (t as f64, 10f64.powi(-t))).collect() };
        let svg = render_svg(&[ser], PlotKind::Residual);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn sigma_sweep_needs_columns() {
        let err = read_sigma_sweep(Path::new("s.csv"), "k,seed\n1,2\n").unwrap_err();
        assert!(matches!(err, HarnessError::Schema { .. }));
        let pts = read_sigma_sweep(Path::new("s.csv"), "k,q,seed,sigma\n1,0.1,3,0.99\n").unwrap();
        assert_eq!(pts, vec![(0.1, 0.99)]);
    }
}
