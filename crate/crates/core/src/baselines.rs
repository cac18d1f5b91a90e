//! Quantized push-sum baselines: Q-Grad-Push / Q-Push-Sum and Q-De-DGD / Q-Push-Gossip.

use nalgebra::{DMatrix, DVector};

use crate::compression::{quantize, quantized_message_bits, Quantizer};
use crate::consensus::{consensus_target, ConsensusConfig};
use crate::error::{Error, Result};
use crate::metrics::{RunMetrics, StepRecord};
use crate::optimize::{run_optimize, ObjectiveOracle, OptRunConfig, StepSchedule, DIVERGENCE_LIMIT};
use crate::rng::{stream, Domain};
use crate::topology::{build_weights, TopologySchedule};

/// Push-sum weights below this abort the run.
pub const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PushSumState {
    pub x: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub y_weights: DVector<f64>,
    /// De-biased estimates `w_i / y_i`.
    pub z: DMatrix<f64>,
    pub t: usize,
}

impl PushSumState {
    pub fn new(x0: &DMatrix<f64>) -> Self {
        Self { x: x0.clone(), w: x0.clone(), y_weights: DVector::from_element(x0.nrows(), 1.0), z: x0.clone(), t: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QDeDGDState {
    pub x: DMatrix<f64>,
    pub x_hat: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub y_weights: DVector<f64>,
    pub z: DMatrix<f64>,
    pub t: usize,
}

impl QDeDGDState {
    /// All-zero states and references, unit weights.
    pub fn zeros(n: usize, d: usize) -> Self {
        let zero = DMatrix::zeros(n, d);
        Self {
            x: zero.clone(),
            x_hat: zero.clone(),
            w: zero.clone(),
            y_weights: DVector::from_element(n, 1.0),
            z: zero,
            t: 0,
        }
    }

    pub fn from_state(x0: &DMatrix<f64>) -> Self {
        let mut s = Self::zeros(x0.nrows(), x0.ncols());
        s.x = x0.clone();
        s.z = x0.clone();
        s
    }
}

/// `Q(x_i)` for every node, each from its own `(seed, t, node)` stream.
fn quantize_rows(x: &DMatrix<f64>, quantizer: &Quantizer, t: usize) -> DMatrix<f64> {
    match quantizer {
        Quantizer::Identity => x.clone(),
        Quantizer::Stochastic(cfg) => {
            let mut out = DMatrix::zeros(x.nrows(), x.ncols());
            for i in 0..x.nrows() {
                let mut rng = stream(cfg.seed, Domain::Quantizer, &[t as u64, i as u64]);
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                let q = quantize(&row, cfg, &mut rng);
                for (m, v) in q.into_iter().enumerate() {
                    out[(i, m)] = v;
                }
            }
            out
        }
    }
}

fn debias(w: &DMatrix<f64>, y: &DVector<f64>, t: usize) -> Result<DMatrix<f64>> {
    let mut z = w.clone();
    for i in 0..w.nrows() {
        if !(y[i] >= WEIGHT_FLOOR) {
            return Err(Error::DegenerateWeights { t, node: i, weight: y[i] });
        }
        z.row_mut(i).unscale_mut(y[i]);
    }
    Ok(z)
}

fn descend(w: &DMatrix<f64>, z: &DMatrix<f64>, oracle: &ObjectiveOracle, alpha: f64) -> DMatrix<f64> {
    let mut x = w.clone();
    if alpha != 0.0 {
        x -= oracle.gradients(z) * alpha;
    }
    x
}

/// `w = A Q(x)`, `y = A y`, `z = w / y`, `x = w - alpha grad F(z)`.
pub fn qgradpush_step(
    state: &PushSumState,
    a: &DMatrix<f64>,
    quantizer: &Quantizer,
    oracle: &ObjectiveOracle,
    alpha: f64,
) -> Result<PushSumState> {
    let w = a * quantize_rows(&state.x, quantizer, state.t);
    let y_weights = a * &state.y_weights;
    let z = debias(&w, &y_weights, state.t + 1)?;
    let x = descend(&w, &z, oracle, alpha);
    Ok(PushSumState { x, w, y_weights, z, t: state.t + 1 })
}

/// `Q_i = Q(x_i - xhat_i)`, `xhat += Q`, `w = x - xhat + A x`, `y = A y`,
/// `z = w / y`, `x = w - alpha grad F(z)`.
pub fn qdedgd_step(
    state: &QDeDGDState,
    a: &DMatrix<f64>,
    quantizer: &Quantizer,
    oracle: &ObjectiveOracle,
    alpha: f64,
) -> Result<QDeDGDState> {
    let q = quantize_rows(&(&state.x - &state.x_hat), quantizer, state.t);
    let x_hat = &state.x_hat + q;
    let w = &state.x - &x_hat + a * &state.x;
    let y_weights = a * &state.y_weights;
    let z = debias(&w, &y_weights, state.t + 1)?;
    let x = descend(&w, &z, oracle, alpha);
    Ok(QDeDGDState { x, x_hat, w, y_weights, z, t: state.t + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    QGradPush,
    QDeDGD,
}

impl BaselineKind {
    /// Name of the scheme with or without a gradient.
    pub fn name(self, with_gradient: bool) -> &'static str {
        match (self, with_gradient) {
            (Self::QGradPush, true) => "q-grad-push",
            (Self::QGradPush, false) => "q-push-sum",
            (Self::QDeDGD, true) => "q-de-dgd",
            (Self::QDeDGD, false) => "q-push-gossip",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub schedule: TopologySchedule,
    pub quantizer: Quantizer,
    pub horizon: usize,
    /// `None` runs the gradient-free consensus variant.
    pub steps: Option<StepSchedule>,
    /// Start Q-De-DGD from zero as its reference implementation does.
    pub zero_init: bool,
}

/// Value bits per step: one quantized message per node.
pub fn baseline_bits_per_step(n: usize, d: usize, quantizer: &Quantizer) -> f64 {
    let per_message = match quantizer {
        Quantizer::Identity => 64.0 * d as f64,
        Quantizer::Stochastic(cfg) => quantized_message_bits(cfg.s, d),
    };
    n as f64 * per_message
}

/// Run a baseline for `horizon` steps. The residual is taken on the
/// de-biased estimates `z` against `x_star`, or against the initial average
/// for the consensus variants.
pub fn run_baseline(
    kind: BaselineKind,
    cfg: &BaselineConfig,
    oracle: &ObjectiveOracle,
    x0: &DMatrix<f64>,
    x_star: Option<&DVector<f64>>,
) -> Result<RunMetrics> {
    let (n, d) = x0.shape();
    if cfg.schedule.n != n {
        return Err(Error::InvalidConfig(format!("schedule has n={}, initial state has {n} rows", cfg.schedule.n)));
    }
    let target = match x_star {
        Some(x) => x.clone(),
        None => consensus_target(x0, &DMatrix::zeros(n, d)),
    };
    let zero = ObjectiveOracle::Zero { n, d };
    let grad_oracle = if cfg.steps.is_some() { oracle } else { &zero };
    let alpha = |t: usize| cfg.steps.as_ref().map_or(0.0, |s| s.alpha(t));
    let per_step = baseline_bits_per_step(n, d, &cfg.quantizer);

    let mut metrics = RunMetrics::default();
    let zbar_loss = |z: &DMatrix<f64>| {
        let mut mean = DVector::zeros(d);
        for row in z.row_iter() {
            mean += row.transpose();
        }
        mean /= n as f64;
        (oracle.value(&mean), oracle.correct_rate(&mean).unwrap_or(f64::NAN))
    };
    let f_star = x_star.map_or(0.0, |x| oracle.value(x));
    let gap = |z: &DMatrix<f64>| z.row_iter().map(|r| (r.transpose() - &target).norm_squared()).sum::<f64>().sqrt();

    let record = |t: usize, z: &DMatrix<f64>, norm0: f64, metrics: &mut RunMetrics| -> Result<()> {
        let g = gap(z);
        let residual = if norm0 == 0.0 { g } else { g / norm0 };
        if !residual.is_finite() || residual > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { t, residual, limit: DIVERGENCE_LIMIT });
        }
        let (loss, correct_rate) = zbar_loss(z);
        metrics.steps.push(StepRecord {
            t,
            residual,
            loss: loss - f_star,
            correct_rate,
            max_surplus_norm: 0.0,
            mass: z.iter().sum(),
            bits_cumulative: (per_step * t as f64).round() as u64,
        });
        Ok(())
    };

    match kind {
        BaselineKind::QGradPush => {
            let mut s = PushSumState::new(x0);
            let norm0 = gap(&s.z);
            record(0, &s.z, norm0, &mut metrics)?;
            for t in 0..cfg.horizon {
                let a = build_weights(cfg.schedule.at(t)).w_out;
                s = qgradpush_step(&s, &a, &cfg.quantizer, grad_oracle, alpha(t))?;
                record(s.t, &s.z, norm0, &mut metrics)?;
            }
        }
        BaselineKind::QDeDGD => {
            let mut s = if cfg.zero_init { QDeDGDState::zeros(n, d) } else { QDeDGDState::from_state(x0) };
            let norm0 = gap(&s.z);
            record(0, &s.z, norm0, &mut metrics)?;
            for t in 0..cfg.horizon {
                let a = build_weights(cfg.schedule.at(t)).w_out;
                s = qdedgd_step(&s, &a, &cfg.quantizer, grad_oracle, alpha(t))?;
                record(s.t, &s.z, norm0, &mut metrics)?;
            }
        }
    }
    Ok(metrics)
}

/// Aligned series of the sparsified method and both quantized baselines.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub runs: Vec<RunMetrics>,
}

impl ComparisonTable {
    pub fn get(&self, label: &str) -> Option<&RunMetrics> {
        self.labels.iter().position(|l| l == label).map(|i| &self.runs[i])
    }

    pub fn final_residuals(&self) -> Vec<(String, f64)> {
        self.labels
            .iter()
            .zip(&self.runs)
            .map(|(l, r)| (l.clone(), r.last().map_or(f64::NAN, |s| s.residual)))
            .collect()
    }
}

/// Run the sparsified optimizer and both baselines on the same schedule.
/// The baselines start from `x0` (Q-De-DGD from zero when `zero_init`).
pub fn matched_comparison(
    opt: &OptRunConfig,
    quantizer: Quantizer,
    x0: &DMatrix<f64>,
    zero_init: bool,
) -> Result<ComparisonTable> {
    let trace = run_optimize(opt, x0)?;
    let x_star = trace.x_star.clone();
    let consensus: &ConsensusConfig = &opt.consensus;
    let base = BaselineConfig {
        schedule: consensus.schedule.clone(),
        quantizer,
        horizon: consensus.horizon,
        steps: Some(opt.steps.clone()),
        zero_init,
    };
    let mut labels = vec![format!("sparsified-q{:.3}", consensus.k as f64 / x0.ncols() as f64)];
    let mut runs = vec![trace.metrics];
    for kind in [BaselineKind::QGradPush, BaselineKind::QDeDGD] {
        labels.push(kind.name(true).to_string());
        runs.push(run_baseline(kind, &base, &opt.oracle, x0, x_star.as_ref())?);
    }
    Ok(ComparisonTable { labels, runs })
}
