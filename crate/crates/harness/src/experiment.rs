//! Build engine inputs from an [`ExperimentConfig`], run experiments and
//! sweeps, and write their outputs.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use sparsepush::baselines::{run_baseline, BaselineConfig, BaselineKind};
use sparsepush::compression::{match_bit_budget, Quantizer, QuantizerConfig};
use sparsepush::consensus::{run_consensus, sum_abs, ConsensusConfig, NetworkState};
use sparsepush::metrics::RunMetrics;
use sparsepush::mixing::{coordinate_mixing_sequence, gamma, spectral_report, window_product, PerturbationSpec};
use sparsepush::optimize::{run_optimize, ObjectiveOracle, OptRunConfig, OptTrace};
use sparsepush::rng::{stream, Domain};
use sparsepush::topology::{generate_er_schedule, DirectedGraphSnapshot, TopologySchedule};

use crate::config::{ExperimentConfig, ExperimentKind, Init, OracleKind, Topology};
use crate::data::{ingest_idx, synth_classification, synth_linreg};
use crate::error::{HarnessError, Result};
use crate::io::{write_atomic, write_metrics, write_opt_trace, Sidecar};

/// Iterations and step of the centralized logistic reference solve.
pub const LOGISTIC_REFERENCE_ITERS: usize = 100_000;

/// The problem a run solves and where it starts.
#[derive(Debug, Clone)]
pub struct Problem {
    pub oracle: ObjectiveOracle,
    pub x0: DMatrix<f64>,
    /// Residual reference; `None` means the oracle's own minimizer.
    pub x_star: Option<DVector<f64>>,
    pub f_star: Option<f64>,
    /// Coordinates kept per message for this state dimension.
    pub k: usize,
}

pub fn build_schedule(cfg: &ExperimentConfig, n: usize) -> Result<TopologySchedule> {
    let horizon = cfg.horizon.max(cfg.window);
    let schedule = match &cfg.topology {
        Topology::Er => generate_er_schedule(n, cfg.p_edge, horizon, cfg.window, cfg.seed)?,
        Topology::Ring => {
            let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).filter(|(a, b)| a != b).collect();
            TopologySchedule::repeated(&DirectedGraphSnapshot::from_edges(n, 0, &edges), horizon, cfg.window)
        }
        Topology::Complete => TopologySchedule::repeated(&DirectedGraphSnapshot::complete(n, 0), horizon, cfg.window),
        Topology::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let s = TopologySchedule::from_text(&text)?;
            if s.n != n || s.is_empty() {
                return Err(HarnessError::Validation(format!(
                    "schedule file {} has n={} and {} snapshots; config needs n={n}",
                    path.display(),
                    s.n,
                    s.len()
                )));
            }
            s
        }
    };
    Ok(schedule)
}

fn random_matrix(seed: u64, domain: Domain, tag: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = stream(seed, domain, &[tag, rows as u64, cols as u64]);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Upper bound on the Lipschitz constant of `grad f` for the logistic oracle.
fn logistic_smoothness(oracle: &ObjectiveOracle) -> f64 {
    match oracle {
        ObjectiveOracle::Logistic { nodes, mu, .. } => {
            let total: f64 = nodes.iter().map(|d| d.features.norm_squared()).sum();
            0.25 * total / nodes.len() as f64 + mu
        }
        _ => 1.0,
    }
}

/// The oracle, start and reference point for a network of `n` nodes.
pub fn build_problem(cfg: &ExperimentConfig, n: usize) -> Result<Problem> {
    let d = cfg.d;
    let init = |dim: usize| match cfg.init {
        Init::Random => random_matrix(cfg.seed, Domain::Init, 0, n, dim),
        Init::Zero => DMatrix::zeros(n, dim),
    };
    let problem = match cfg.oracle {
        OracleKind::Zero => Problem { oracle: ObjectiveOracle::Zero { n, d }, x0: init(d), x_star: None, f_star: None, k: cfg.k },
        OracleKind::Quadratic => {
            let c = random_matrix(cfg.seed, Domain::Data, 2, n, d);
            let centers = c.row_iter().map(|r| r.transpose()).collect();
            Problem { oracle: ObjectiveOracle::Quadratic { centers }, x0: init(d), x_star: None, f_star: None, k: cfg.k }
        }
        OracleKind::Linreg => {
            let (nodes, _) = synth_linreg(n, cfg.per_node(n), d, cfg.noise_var, cfg.row_norm, cfg.seed)?;
            Problem { oracle: ObjectiveOracle::LinearRegression { nodes }, x0: init(d), x_star: None, f_star: None, k: cfg.k }
        }
        OracleKind::Logistic => {
            let data = match (&cfg.images, &cfg.labels) {
                (Some(images), Some(labels)) => {
                    let max = cfg.max_items.or(cfg.total_samples).unwrap_or(cfg.per_node(n) * n);
                    ingest_idx(images, labels, Some(max), d)?
                }
                _ => {
                    let total = cfg.total_samples.unwrap_or(cfg.samples_per_node * n);
                    synth_classification(cfg.classes, total.div_ceil(cfg.classes), d, cfg.separation, cfg.seed)?
                }
            };
            if let Some(&bad) = data.labels.iter().find(|&&l| l >= cfg.classes) {
                return Err(HarnessError::Validation(format!("label {bad} out of range for classes = {}", cfg.classes)));
            }
            let heads = if cfg.classes == 2 { 1 } else { cfg.classes };
            let oracle = ObjectiveOracle::Logistic { nodes: data.partition(n), classes: cfg.classes, mu: cfg.mu };
            let x_ref = oracle.logistic_reference(LOGISTIC_REFERENCE_ITERS, 1.0 / logistic_smoothness(&oracle));
            let f_ref = oracle.value(&x_ref);
            Problem { x0: init(heads * d), oracle, x_star: Some(x_ref), f_star: Some(f_ref), k: cfg.k * heads }
        }
    };
    Ok(problem)
}

fn consensus_config(cfg: &ExperimentConfig, schedule: TopologySchedule, k: usize, epsilon: f64) -> Result<ConsensusConfig> {
    Ok(ConsensusConfig {
        schedule,
        k,
        perturbation: PerturbationSpec::new(epsilon, cfg.window)?,
        horizon: cfg.horizon,
        seed: cfg.seed,
        mask_convention: cfg.mask_convention,
        track_spectrum: cfg.track_spectrum,
    })
}

fn base_sidecar(cfg: &ExperimentConfig, kind: &str) -> Sidecar {
    let mut s = Sidecar::new(&cfg.hash(), cfg.seed);
    s.set("kind", kind).set("B", cfg.window).set_f64("epsilon", cfg.epsilon);
    s
}

/// One consensus run and its sidecar.
pub fn consensus_run(cfg: &ExperimentConfig, n: usize, epsilon: f64) -> Result<(RunMetrics, Sidecar)> {
    let problem = build_problem(&ExperimentConfig { oracle: OracleKind::Zero, ..cfg.clone() }, n)?;
    let cc = consensus_config(cfg, build_schedule(cfg, n)?, problem.k, epsilon)?;
    let metrics = run_consensus(&cc, &problem.x0)?;
    let mut side = base_sidecar(cfg, "consensus");
    side.set_f64("epsilon", epsilon)
        .set("n", n)
        .set("d", cfg.d)
        .set("k", problem.k)
        .set_f64("gamma", gamma(n, cfg.d))
        .set_f64("sum_abs_z0", sum_abs(&NetworkState::new(&problem.x0).z));
    Ok((metrics, side))
}

/// One descent run of the sparsified method.
pub fn optimize_run(cfg: &ExperimentConfig, n: usize, k: usize) -> Result<(OptTrace, Sidecar)> {
    let problem = build_problem(cfg, n)?;
    let k_state = if problem.k == cfg.k { k } else { k * problem.k / cfg.k };
    let cc = consensus_config(cfg, build_schedule(cfg, n)?, k_state, cfg.epsilon)?;
    let run = OptRunConfig {
        consensus: cc,
        oracle: problem.oracle,
        steps: cfg.step_schedule(),
        x_star: problem.x_star,
        f_star: problem.f_star,
    };
    let trace = run_optimize(&run, &problem.x0)?;
    let mut side = base_sidecar(cfg, "optimize");
    side.set("oracle", cfg.oracle.tag()).set("k", k_state).set_f64("gamma", gamma(n, trace.d));
    Ok((trace, side))
}

/// Quantization level whose per-message bits match the sparsified method at `q_match`.
pub fn matched_quantizer(cfg: &ExperimentConfig, d: usize) -> Result<Quantizer> {
    let budget = match_bit_budget(cfg.q_match, d)?;
    Ok(Quantizer::Stochastic(QuantizerConfig::new(budget.s, cfg.seed)?))
}

/// One baseline run at the matched bit budget.
pub fn baseline_run(cfg: &ExperimentConfig, n: usize, kind: BaselineKind) -> Result<(RunMetrics, Sidecar)> {
    let problem = build_problem(cfg, n)?;
    let d = problem.x0.ncols();
    let with_gradient = !matches!(problem.oracle, ObjectiveOracle::Zero { .. });
    let x_star = problem.x_star.clone().or_else(|| problem.oracle.minimizer());
    let base = BaselineConfig {
        schedule: build_schedule(cfg, n)?,
        quantizer: matched_quantizer(cfg, d)?,
        horizon: cfg.horizon,
        steps: with_gradient.then(|| cfg.step_schedule()),
        zero_init: true,
    };
    let reference = if with_gradient { x_star.as_ref() } else { None };
    let metrics = run_baseline(kind, &base, &problem.oracle, &problem.x0, reference)?;
    let mut side = base_sidecar(cfg, kind.name(with_gradient));
    side.set("oracle", cfg.oracle.tag()).set_f64("q_match", cfg.q_match);
    Ok((metrics, side))
}

/// `mean_m sigma(M_m - L)` for the first perturbed window at sparsity `k`.
pub fn first_window_sigma(cfg: &ExperimentConfig, k: usize, seed: u64) -> Result<f64> {
    let cfg = cfg.clone().with_seed(seed);
    let schedule = build_schedule(&cfg, cfg.n)?;
    let mut total = 0.0;
    for m in 0..cfg.d {
        let mbars = coordinate_mixing_sequence(&schedule, cfg.d, k, seed, cfg.mask_convention, m, cfg.window)?;
        total += spectral_report(&window_product(&mbars, cfg.epsilon), cfg.d)?.sigma;
    }
    Ok(total / cfg.d as f64)
}

/// Rows `(k, q, seed, sigma)` of a spectral sweep, in `(k, seed)` order.
pub fn spectral_sweep(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, u64, f64)>> {
    let jobs: Vec<(usize, u64)> = cfg.k_list.iter().flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s))).collect();
    jobs.par_iter()
        .map(|&(k, s)| Ok((k, k as f64 / cfg.d as f64, s, first_window_sigma(cfg, k, s)?)))
        .collect()
}

/// Per-epsilon consensus runs: `(epsilon, steps to threshold, final residual, metrics)`.
pub fn epsilon_sweep(cfg: &ExperimentConfig) -> Result<Vec<(f64, Option<usize>, f64, RunMetrics, Sidecar)>> {
    cfg.eps_list
        .par_iter()
        .map(|&eps| {
            let (m, side) = consensus_run(cfg, cfg.n, eps)?;
            let last = m.last().map_or(f64::NAN, |r| r.residual);
            Ok((eps, m.steps_to(cfg.threshold), last, m, side))
        })
        .collect()
}

/// Per-size descent runs: `(n, steps until the loss gap falls to
/// threshold x its initial value, final gap ratio, trace)`.
pub fn size_sweep(cfg: &ExperimentConfig) -> Result<Vec<(usize, Option<usize>, f64, OptTrace, Sidecar)>> {
    cfg.n_list
        .par_iter()
        .map(|&n| {
            let (trace, side) = optimize_run(cfg, n, cfg.k)?;
            let l0 = trace.metrics.steps[0].loss;
            let last = trace.metrics.last().map_or(f64::NAN, |r| r.loss / l0);
            Ok((n, trace.metrics.steps_to_loss(cfg.threshold * l0), last, trace, side))
        })
        .collect()
}

/// Labelled descent runs for every `k` in `k_list` plus the configured
/// baselines at the `q_match` bit budget.
pub fn baseline_compare(cfg: &ExperimentConfig) -> Result<Vec<(String, RunMetrics, Sidecar)>> {
    let mut jobs: Vec<Option<usize>> = cfg.k_list.iter().map(|&k| Some(k)).collect();
    jobs.extend(cfg.baselines.iter().map(|_| None));
    let nk = cfg.k_list.len();
    jobs.par_iter()
        .enumerate()
        .map(|(i, job)| match job {
            Some(k) => {
                let (trace, side) = optimize_run(cfg, cfg.n, *k)?;
                Ok((format!("sparsified-k{k}"), trace.metrics, side))
            }
            None => {
                let kind = cfg.baselines[i - nk];
                let (m, side) = baseline_run(cfg, cfg.n, kind)?;
                Ok((kind.name(true).to_string(), m, side))
            }
        })
        .collect()
}

/// Files written by [`execute`].
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn summary_line(m: &RunMetrics) -> String {
    m.last().map_or_else(String::new, |r| {
        format!("t={} residual={:e} loss={:e} max_surplus={:e} bits={}", r.t, r.residual, r.loss, r.max_surplus_norm, r.bits_cumulative)
    })
}

fn opt_string(v: Option<usize>) -> String {
    v.map_or_else(|| "none".into(), |s| s.to_string())
}

/// Run whatever `cfg.experiment` names and write every output under `cfg.out`.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome> {
    let dir = &cfg.out;
    let stem = |s: &str| dir.join(format!("{s}.csv"));
    let mut out = Outcome::default();
    match cfg.experiment {
        ExperimentKind::Consensus => {
            let (m, side) = consensus_run(cfg, cfg.n, cfg.epsilon)?;
            let p = stem(&cfg.name);
            write_metrics(&m, &p, &side)?;
            out.summary = summary_line(&m);
            out.files.push(p);
        }
        ExperimentKind::Linreg | ExperimentKind::Logistic => {
            let (trace, side) = optimize_run(cfg, cfg.n, cfg.k)?;
            let p = stem(&cfg.name);
            write_opt_trace(&trace, &p, &side)?;
            out.summary = summary_line(&trace.metrics);
            out.files.push(p);
        }
        ExperimentKind::SpectralSweep => {
            let rows = spectral_sweep(cfg)?;
            let mut s = String::from("k,q,seed,sigma\n");
            for (k, q, seed, sigma) in &rows {
                let _ = writeln!(s, "{k},{q:e},{seed},{sigma:e}");
            }
            let p = stem(&cfg.name);
            write_atomic(&p, &s)?;
            out.summary = format!("{} (k, seed) points", rows.len());
            out.files.push(p);
        }
        ExperimentKind::EpsilonSweep => {
            let rows = epsilon_sweep(cfg)?;
            let mut s = String::from("epsilon,steps_to_threshold,final_residual\n");
            for (eps, steps, last, m, side) in &rows {
                let _ = writeln!(s, "{eps:e},{},{last:e}", opt_string(*steps));
                let p = stem(&format!("{}-eps{eps:e}", cfg.name));
                write_metrics(m, &p, side)?;
                out.files.push(p);
            }
            let p = stem(&cfg.name);
            write_atomic(&p, &s)?;
            out.summary = s.clone();
            out.files.push(p);
        }
        ExperimentKind::SizeSweep => {
            let rows = size_sweep(cfg)?;
            let mut s = String::from("n,steps_to_threshold,final_loss_ratio,final_correct_rate\n");
            for (n, steps, last, trace, side) in &rows {
                let cr = trace.metrics.last().map_or(f64::NAN, |r| r.correct_rate);
                let _ = writeln!(s, "{n},{},{last:e},{cr:e}", opt_string(*steps));
                let p = stem(&format!("{}-n{n}", cfg.name));
                write_opt_trace(trace, &p, side)?;
                out.files.push(p);
            }
            let p = stem(&cfg.name);
            write_atomic(&p, &s)?;
            out.summary = s.clone();
            out.files.push(p);
        }
        ExperimentKind::BaselineCompare => {
            let rows = baseline_compare(cfg)?;
            let mut s = String::from("label,final_residual,steps_to_threshold,bits_total\n");
            for (label, m, side) in &rows {
                let (res, bits) = m.last().map_or((f64::NAN, 0), |r| (r.residual, r.bits_cumulative));
                let _ = writeln!(s, "{label},{res:e},{},{bits}", opt_string(m.steps_to(cfg.threshold)));
                let p = stem(&format!("{}-{label}", cfg.name));
                write_metrics(m, &p, side)?;
                out.files.push(p);
            }
            let p = stem(&cfg.name);
            write_atomic(&p, &s)?;
            out.summary = s.clone();
            out.files.push(p);
        }
    }
    for f in &out.files {
        log::info!("wrote {}", f.display());
    }
    Ok(out)
}
