//! Metrics persistence: per-run CSV files plus a `key = value` sidecar.
//!
//! A run with stem `S` produces `S.csv` (per-step rows), `S.meta`
//! (provenance and verification constants), `S.diag.csv` (per-step
//! disagreement), `S.windows.csv` (per-window spectra) and, for descent runs,
//! `S.opt.csv` (per-window snapshots). Every file is written to a temporary
//! name in the target directory and renamed into place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use sparsepush::metrics::{DisagreementRecord, RunMetrics, StepRecord, WindowRecord, STEP_HEADER};
use sparsepush::optimize::{OptTrace, WindowSnapshot};

use crate::error::{HarnessError, Result};

pub const DIAG_HEADER: &str = "t,max_state_gap,sum_state_gap,max_surplus";
pub const WINDOW_HEADER: &str = "k,sigma,eigmult,epsilon_bound";

/// Write `contents` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

fn sibling(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}{suffix}"))
}

pub fn meta_path(csv: &Path) -> PathBuf {
    sibling(csv, ".meta")
}

pub fn diag_path(csv: &Path) -> PathBuf {
    sibling(csv, ".diag.csv")
}

pub fn windows_path(csv: &Path) -> PathBuf {
    sibling(csv, ".windows.csv")
}

pub fn opt_path(csv: &Path) -> PathBuf {
    sibling(csv, ".opt.csv")
}

/// Ordered `key = value` provenance record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sidecar(pub BTreeMap<String, String>);

impl Sidecar {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        let mut s = Self::default();
        s.set("config_hash", config_hash);
        s.set("seed", seed);
        s
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.set(key, format!("{value:e}"))
    }

    pub fn set_vec(&mut self, key: &str, v: &DVector<f64>) -> &mut Self {
        let text: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        self.set(key, text.join(" "))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Option<T> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn vec(&self, key: &str) -> Option<DVector<f64>> {
        let items: Option<Vec<f64>> = self.get(key)?.split_whitespace().map(|t| t.parse().ok()).collect();
        items.map(DVector::from_vec)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().fold(String::new(), |mut s, (k, v)| {
            let _ = writeln!(s, "{k} = {v}");
            s
        })
    }

    pub fn from_text(text: &str) -> Self {
        Self(
            text.lines()
                .filter_map(|l| l.split_once('='))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        )
    }
}

pub fn steps_csv(metrics: &RunMetrics) -> String {
    let mut s = format!("{STEP_HEADER}\n");
    for r in &metrics.steps {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            r.t, r.residual, r.loss, r.correct_rate, r.max_surplus_norm, r.mass, r.bits_cumulative
        );
    }
    s
}

fn diag_csv(metrics: &RunMetrics) -> String {
    let mut s = format!("{DIAG_HEADER}\n");
    for r in &metrics.disagreement {
        let _ = writeln!(s, "{},{:e},{:e},{:e}", r.t, r.max_state_gap, r.sum_state_gap, r.max_surplus);
    }
    s
}

fn windows_csv(metrics: &RunMetrics) -> String {
    let mut s = format!("{WINDOW_HEADER}\n");
    for w in &metrics.windows {
        let _ = writeln!(s, "{},{:e},{},{:e}", w.k, w.sigma, w.eigmult, w.epsilon_bound);
    }
    s
}

/// Write `S.csv`, `S.meta`, `S.diag.csv` and `S.windows.csv`.
pub fn write_metrics(metrics: &RunMetrics, path: &Path, sidecar: &Sidecar) -> Result<()> {
    write_atomic(path, &steps_csv(metrics))?;
    write_atomic(&diag_path(path), &diag_csv(metrics))?;
    write_atomic(&windows_path(path), &windows_csv(metrics))?;
    write_atomic(&meta_path(path), &sidecar.to_text())
}

fn opt_header(n: usize, d: usize) -> String {
    let mut cols = vec!["k".to_string(), "alpha".into(), "f_zbar".into(), "grad_max".into()];
    cols.extend((0..n).map(|i| format!("gap_{i}")));
    cols.extend((0..n).map(|i| format!("surplus_{i}")));
    cols.extend((0..d).map(|m| format!("zbar_{m}")));
    cols.extend((0..d).map(|m| format!("grad_sum_{m}")));
    cols.join(",")
}

/// Write a descent trace: metrics files plus `S.opt.csv`. The sidecar gains
/// the initial state, `x*` and `f*` so the trace can be re-verified.
pub fn write_opt_trace(trace: &OptTrace, path: &Path, sidecar: &Sidecar) -> Result<()> {
    let mut side = sidecar.clone();
    side.set("n", trace.n).set("d", trace.d).set_f64("d_measured", trace.d_measured);
    let x0 = trace.z0.rows(0, trace.n).transpose();
    side.set_vec("x0", &DVector::from_column_slice(x0.as_slice()));
    if let Some(x) = &trace.x_star {
        side.set_vec("x_star", x);
    }
    if let Some(f) = trace.f_star {
        side.set_f64("f_star", f);
    }
    write_metrics(&trace.metrics, path, &side)?;
    let mut s = opt_header(trace.n, trace.d);
    s.push('\n');
    for w in &trace.windows {
        let _ = write!(s, "{},{:e},{:e},{:e}", w.k, w.alpha, w.f_zbar, w.grad_max);
        for v in w.state_gaps.iter().chain(&w.surplus_norms).chain(w.zbar.iter()).chain(w.grad_sum.iter()) {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    write_atomic(&opt_path(path), &s)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

fn schema(path: &Path, msg: String) -> HarnessError {
    HarnessError::Schema { path: path.to_path_buf(), msg }
}

/// Split a CSV with the expected header into rows of fields.
fn rows<'a>(path: &Path, text: &'a str, header: &str) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        Some(h) => return Err(schema(path, format!("header `{h}`, expected `{header}`"))),
        None => return Err(schema(path, "empty file".into())),
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() == width {
                Ok(f)
            } else {
                Err(schema(path, format!("line {}: {} fields, expected {width}", i + 2, f.len())))
            }
        })
        .collect()
}

fn field<T: FromStr>(path: &Path, v: &str) -> Result<T> {
    v.parse().map_err(|_| schema(path, format!("cannot parse field `{v}`")))
}

pub fn parse_steps(path: &Path, text: &str) -> Result<Vec<StepRecord>> {
    rows(path, text, STEP_HEADER)?
        .into_iter()
        .map(|f| {
            Ok(StepRecord {
                t: field(path, f[0])?,
                residual: field(path, f[1])?,
                loss: field(path, f[2])?,
                correct_rate: field(path, f[3])?,
                max_surplus_norm: field(path, f[4])?,
                mass: field(path, f[5])?,
                bits_cumulative: field(path, f[6])?,
            })
        })
        .collect()
}

/// Read `S.csv` plus whichever of the diagnostics files exist.
pub fn read_metrics(path: &Path) -> Result<RunMetrics> {
    let steps = parse_steps(path, &read(path)?)?;
    let mut metrics = RunMetrics { steps, ..Default::default() };
    let dp = diag_path(path);
    if dp.is_file() {
        metrics.disagreement = rows(&dp, &read(&dp)?, DIAG_HEADER)?
            .into_iter()
            .map(|f| {
                Ok(DisagreementRecord {
                    t: field(&dp, f[0])?,
                    max_state_gap: field(&dp, f[1])?,
                    sum_state_gap: field(&dp, f[2])?,
                    max_surplus: field(&dp, f[3])?,
                })
            })
            .collect::<Result<_>>()?;
    }
    let wp = windows_path(path);
    if wp.is_file() {
        metrics.windows = rows(&wp, &read(&wp)?, WINDOW_HEADER)?
            .into_iter()
            .map(|f| {
                Ok(WindowRecord {
                    k: field(&wp, f[0])?,
                    sigma: field(&wp, f[1])?,
                    eigmult: field(&wp, f[2])?,
                    epsilon_bound: field(&wp, f[3])?,
                })
            })
            .collect::<Result<_>>()?;
    }
    Ok(metrics)
}

pub fn read_sidecar(csv: &Path) -> Result<Sidecar> {
    Ok(Sidecar::from_text(&read(&meta_path(csv))?))
}

/// Rebuild a descent trace written by [`write_opt_trace`].
pub fn read_opt_trace(path: &Path) -> Result<OptTrace> {
    let metrics = read_metrics(path)?;
    let side = read_sidecar(path)?;
    let meta = meta_path(path);
    let need = |k: &str| schema(&meta, format!("missing `{k}`"));
    let n: usize = side.parse("n").ok_or_else(|| need("n"))?;
    let d: usize = side.parse("d").ok_or_else(|| need("d"))?;
    let x0 = side.vec("x0").filter(|v| v.len() == n * d).ok_or_else(|| need("x0"))?;
    let x0 = DMatrix::from_row_slice(n, d, x0.as_slice());
    let op = opt_path(path);
    let windows = rows(&op, &read(&op)?, &opt_header(n, d))?
        .into_iter()
        .map(|f| {
            let nums: Vec<f64> = f[1..].iter().map(|v| field(&op, v)).collect::<Result<_>>()?;
            Ok(WindowSnapshot {
                k: field(&op, f[0])?,
                alpha: nums[0],
                f_zbar: nums[1],
                grad_max: nums[2],
                state_gaps: nums[3..3 + n].to_vec(),
                surplus_norms: nums[3 + n..3 + 2 * n].to_vec(),
                zbar: DVector::from_column_slice(&nums[3 + 2 * n..3 + 2 * n + d]),
                grad_sum: DVector::from_column_slice(&nums[3 + 2 * n + d..]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut z0 = DMatrix::zeros(2 * n, d);
    z0.rows_mut(0, n).copy_from(&x0);
    Ok(OptTrace {
        metrics,
        windows,
        z0,
        x_star: side.vec("x_star"),
        f_star: side.parse("f_star"),
        d_measured: side.parse("d_measured").ok_or_else(|| need("d_measured"))?,
        n,
        d,
    })
}

/// Structural checks every emitted per-step series must satisfy.
pub fn check_invariants(metrics: &RunMetrics) -> std::result::Result<(), String> {
    if let Some(w) = metrics.steps.windows(2).find(|w| w[1].t <= w[0].t) {
        return Err(format!("rows out of order at t={}", w[1].t));
    }
    if let Some(first) = metrics.steps.first() {
        if first.t != 0 {
            return Err(format!("first row has t={}", first.t));
        }
        if first.residual != 1.0 && first.residual != 0.0 {
            return Err(format!("residual at t=0 is {}, expected 1", first.residual));
        }
    }
    if let Some(w) = metrics.steps.windows(2).find(|w| w[1].bits_cumulative < w[0].bits_cumulative) {
        return Err(format!("bits decrease at t={}", w[1].t));
    }
    Ok(())
}
