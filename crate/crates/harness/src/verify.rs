//! Re-check the convergence guarantees against a stored trace.

use std::path::Path;

use sparsepush::consensus::verify_theorem1;
use sparsepush::metrics::RunMetrics;
use sparsepush::mixing::gamma;
use sparsepush::optimize::{verify_lemma3, verify_theorem3, StepSchedule};

use crate::error::{HarnessError, Result};
use crate::io::{check_invariants, meta_path, read_metrics, read_opt_trace, read_sidecar};

/// Relative drift allowed in the conserved total `sum z`.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name, passed, detail: detail.into() }
    }
}

fn mass_check(m: &RunMetrics) -> Check {
    let Some(first) = m.steps.first() else {
        return Check::new("mass conservation", true, "empty trace");
    };
    let scale = first.mass.abs().max(1.0);
    let drift = m.steps.iter().map(|s| (s.mass - first.mass).abs()).fold(0.0, f64::max) / scale;
    Check::new("mass conservation", drift <= MASS_TOL, format!("max relative drift {drift:e} (tol {MASS_TOL:e})"))
}

/// Window products must have a simple eigenvalue 1 and `sigma < 1`.
fn lemma0_check(m: &RunMetrics) -> (Check, Option<f64>) {
    let Some(sigma_hat) = m.sigma_hat() else {
        return (Check::new("lemma 0 spectral gap", false, "no per-window spectra recorded (set track_spectrum = true)"), None);
    };
    let bad = m.windows.iter().filter(|w| w.eigmult != 1 || w.sigma >= 1.0).count();
    let detail = format!("sigma_hat = {sigma_hat:.6}; {bad} of {} windows lack a simple eigenvalue 1 or have sigma >= 1", m.windows.len());
    (Check::new("lemma 0 spectral gap", bad == 0, detail), Some(sigma_hat))
}

fn need<T>(v: Option<T>, key: &str, csv: &Path) -> Result<T> {
    v.ok_or_else(|| HarnessError::Schema { path: meta_path(csv), msg: format!("missing `{key}`") })
}

/// Run every check applicable to the trace at `csv`.
pub fn verify_trace(csv: &Path) -> Result<Vec<Check>> {
    let side = read_sidecar(csv)?;
    let kind = need(side.get("kind").map(str::to_string), "kind", csv)?;
    let metrics = read_metrics(csv)?;
    let mut checks = vec![match check_invariants(&metrics) {
        Ok(()) => Check::new("series invariants", true, format!("{} rows", metrics.steps.len())),
        Err(e) => Check::new("series invariants", false, e),
    }];
    match kind.as_str() {
        "consensus" => {
            checks.push(mass_check(&metrics));
            let (lemma0, sigma_hat) = lemma0_check(&metrics);
            checks.push(lemma0);
            match sigma_hat {
                Some(s) => {
                    let window: usize = need(side.parse("B"), "B", csv)?;
                    let g: f64 = need(side.parse("gamma"), "gamma", csv)?;
                    let s0: f64 = need(side.parse("sum_abs_z0"), "sum_abs_z0", csv)?;
                    let r = verify_theorem1(&metrics, window, s, g, s0);
                    let detail = format!(
                        "worst gap/bound ratio {:.3e}; {} state and {} surplus violations",
                        r.worst_ratio,
                        r.state_violations.len(),
                        r.surplus_violations.len()
                    );
                    checks.push(Check::new("theorem 1 bound", r.passed, detail));
                }
                None => checks.push(Check::new("theorem 1 bound", false, "needs sigma_hat from recorded spectra")),
            }
        }
        "optimize" => {
            let trace = read_opt_trace(csv)?;
            let t3 = verify_theorem3(&trace, None)?;
            let ratio = |f: fn(&sparsepush::optimize::Theorem3Row) -> f64| {
                t3.rows.iter().map(|r| r.lhs / f(r)).fold(f64::NEG_INFINITY, f64::max)
            };
            checks.push(Check::new(
                "theorem 3 bound (printed)",
                t3.printed_holds,
                format!("max lhs/rhs {:.3e} over {} prefixes", ratio(|r| r.rhs_printed), t3.rows.len()),
            ));
            checks.push(Check::new(
                "theorem 3 bound (squared)",
                t3.squared_holds,
                format!("max lhs/rhs {:.3e}", ratio(|r| r.rhs_squared)),
            ));
            let (lemma0, sigma_hat) = lemma0_check(&metrics);
            checks.push(lemma0);
            match sigma_hat {
                Some(s) => {
                    let steps = StepSchedule::Explicit(trace.windows.iter().map(|w| w.alpha).collect());
                    let r = verify_lemma3(&trace, gamma(trace.n, trace.d), s, &steps, None);
                    let bad = r.rows.iter().filter(|row| row.2 > row.1 || row.4 > row.3).count();
                    checks.push(Check::new("lemma 3 disagreement bound", r.passed, format!("{bad} of {} windows violate", r.rows.len())));
                }
                None => checks.push(Check::new("lemma 3 disagreement bound", false, "needs sigma_hat from recorded spectra")),
            }
        }
        _ => checks.push(Check::new("baseline trace", true, format!("kind `{kind}`: structural checks only"))),
    }
    Ok(checks)
}
