//! Sparsified decentralized (sub)gradient descent and its bound checkers.

use nalgebra::{DMatrix, DVector};

use crate::consensus::{
    bits_per_step, disagreement, mix, step_inputs, ConsensusConfig, NetworkState, Recorder, SpectralTracker,
};
use crate::error::{Error, Result};
use crate::metrics::{RunMetrics, StepRecord};
use crate::mixing::{CoordinateMixingSet, PerturbationSpec, StepMasks};

/// Residual above which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Local data of one node for least squares: `f_i(x) = ||y_i - D_i x||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub features: DMatrix<f64>,
    pub targets: DVector<f64>,
}

/// Local data of one node for classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationData {
    /// One sample per row.
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveOracle {
    /// `f_i = 0`; Algorithm 1 as a special case.
    Zero { n: usize, d: usize },
    /// `f_i(x) = 0.5 ||x - c_i||^2`.
    Quadratic { centers: Vec<DVector<f64>> },
    LinearRegression { nodes: Vec<RegressionData> },
    /// Regularized logistic loss, one-vs-rest when there are more than two classes.
    Logistic { nodes: Vec<ClassificationData>, classes: usize, mu: f64 },
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// `1 / (1 + exp(u))` without overflow.
fn logistic_weight(u: f64) -> f64 {
    if u > 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

impl ObjectiveOracle {
    pub fn n(&self) -> usize {
        match self {
            Self::Zero { n, .. } => *n,
            Self::Quadratic { centers } => centers.len(),
            Self::LinearRegression { nodes } => nodes.len(),
            Self::Logistic { nodes, .. } => nodes.len(),
        }
    }

    /// Parameter dimension.
    pub fn d(&self) -> usize {
        match self {
            Self::Zero { d, .. } => *d,
            Self::Quadratic { centers } => centers[0].len(),
            Self::LinearRegression { nodes } => nodes[0].features.ncols(),
            Self::Logistic { nodes, classes, .. } => nodes[0].features.ncols() * Self::heads(*classes),
        }
    }

    /// Number of one-vs-rest weight blocks.
    fn heads(classes: usize) -> usize {
        if classes == 2 {
            1
        } else {
            classes
        }
    }

    fn sign(label: usize, head: usize, classes: usize) -> f64 {
        let positive = if classes == 2 { label == 1 } else { label == head };
        if positive {
            1.0
        } else {
            -1.0
        }
    }

    /// `f_i(x)`; zero for `node >= n`.
    pub fn local_value(&self, node: usize, x: &DVector<f64>) -> f64 {
        if node >= self.n() {
            return 0.0;
        }
        match self {
            Self::Zero { .. } => 0.0,
            Self::Quadratic { centers } => 0.5 * (x - &centers[node]).norm_squared(),
            Self::LinearRegression { nodes } => {
                let data = &nodes[node];
                (&data.targets - &data.features * x).norm_squared()
            }
            Self::Logistic { nodes, classes, mu } => {
                let data = &nodes[node];
                let p = data.features.ncols();
                let mut value = 0.5 * mu * x.norm_squared();
                for h in 0..Self::heads(*classes) {
                    let w = x.rows(h * p, p);
                    for (row, &label) in data.features.row_iter().zip(&data.labels) {
                        let y = Self::sign(label, h, *classes);
                        value += softplus(-y * row.transpose().dot(&w));
                    }
                }
                value
            }
        }
    }

    /// `f(x) = (1/n) sum_i f_i(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (0..self.n()).map(|i| self.local_value(i, x)).sum::<f64>() / self.n() as f64
    }

    /// `grad f_i(x)` for `node < n`, the zero vector for surplus rows.
    pub fn gradient(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        if node >= self.n() {
            return DVector::zeros(x.len());
        }
        match self {
            Self::Zero { .. } => DVector::zeros(x.len()),
            Self::Quadratic { centers } => x - &centers[node],
            Self::LinearRegression { nodes } => {
                let data = &nodes[node];
                data.features.tr_mul(&(&data.features * x - &data.targets)) * 2.0
            }
            Self::Logistic { nodes, classes, mu } => {
                let data = &nodes[node];
                let p = data.features.ncols();
                let mut g = x * *mu;
                for h in 0..Self::heads(*classes) {
                    let w = x.rows(h * p, p).into_owned();
                    let mut block = g.rows_mut(h * p, p);
                    for (row, &label) in data.features.row_iter().zip(&data.labels) {
                        let y = Self::sign(label, h, *classes);
                        let c = -y * logistic_weight(y * row.dot(&w.transpose()));
                        block += row.transpose() * c;
                    }
                }
                g
            }
        }
    }

    /// Closed-form or normal-equation minimizer when one exists.
    pub fn minimizer(&self) -> Option<DVector<f64>> {
        match self {
            Self::Zero { .. } | Self::Logistic { .. } => None,
            Self::Quadratic { centers } => {
                let mut s = DVector::zeros(centers[0].len());
                for c in centers {
                    s += c;
                }
                Some(s / centers.len() as f64)
            }
            Self::LinearRegression { nodes } => {
                let p = nodes[0].features.ncols();
                let mut gram = DMatrix::zeros(p, p);
                let mut rhs = DVector::zeros(p);
                for data in nodes {
                    gram += data.features.tr_mul(&data.features);
                    rhs += data.features.tr_mul(&data.targets);
                }
                gram.cholesky().map(|c| c.solve(&rhs))
            }
        }
    }

    /// Approximate minimizer of the logistic objective by centralized gradient descent.
    pub fn logistic_reference(&self, iterations: usize, step: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.d());
        let n = self.n() as f64;
        for _ in 0..iterations {
            let mut g = DVector::zeros(self.d());
            for i in 0..self.n() {
                g += self.gradient(i, &x);
            }
            x -= g * (step / n);
        }
        x
    }

    /// Fraction of all training samples whose argmax (or sign) prediction is correct.
    pub fn correct_rate(&self, x: &DVector<f64>) -> Option<f64> {
        let Self::Logistic { nodes, classes, .. } = self else {
            return None;
        };
        let p = nodes[0].features.ncols();
        let mut correct = 0usize;
        let mut total = 0usize;
        for data in nodes {
            for (row, &label) in data.features.row_iter().zip(&data.labels) {
                let score = |h: usize| row.transpose().dot(&x.rows(h * p, p));
                let predicted = if *classes == 2 {
                    usize::from(score(0) > 0.0)
                } else {
                    (0..*classes).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap()
                };
                correct += usize::from(predicted == label);
                total += 1;
            }
        }
        Some(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
    }

    /// Stacked gradients of all node states, `n x d`.
    pub fn gradients(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..x.nrows() {
            let gi = self.gradient(i, &x.row(i).transpose());
            g.set_row(i, &gi.transpose());
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSchedule {
    /// `a / (k + 1)`.
    Harmonic { a: f64 },
    /// `a / sqrt(k + 1)`.
    InvSqrt { a: f64 },
    /// Listed values; the last one repeats past the end.
    Explicit(Vec<f64>),
}

impl StepSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            Self::Harmonic { a } => a / (k + 1) as f64,
            Self::InvSqrt { a } => a / ((k + 1) as f64).sqrt(),
            Self::Explicit(v) => v.get(k).or(v.last()).copied().unwrap_or(0.0),
        }
    }

    /// `alpha_{k-1}`, taken as 0 for `k = 0`.
    pub fn alpha_before(&self, k: usize) -> f64 {
        k.checked_sub(1).map_or(0.0, |j| self.alpha(j))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Harmonic { a } | Self::InvSqrt { a } => *a >= 0.0 && a.is_finite(),
            Self::Explicit(v) => !v.is_empty() && v.iter().all(|a| *a >= 0.0 && a.is_finite()),
        };
        if !ok {
            return Err(Error::InvalidConfig("step sizes must be finite and non-negative".into()));
        }
        if matches!(self, Self::InvSqrt { .. }) {
            log::info!("a/sqrt(k) steps: sum of squares diverges logarithmically");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptRunConfig {
    pub consensus: ConsensusConfig,
    pub oracle: ObjectiveOracle,
    pub steps: StepSchedule,
    /// Residual reference; taken from the oracle when it has a closed form.
    pub x_star: Option<DVector<f64>>,
    /// Optimal value; computed from `x_star` when absent.
    pub f_star: Option<f64>,
}

/// Gradient at the window-start states, stored for application at the window end.
pub fn snapshot_gradient(state: &mut NetworkState, oracle: &ObjectiveOracle) {
    state.stored_gradient = Some(oracle.gradients(&state.x()));
}

/// One step of the descent recursion: mixing, window-end perturbation, and
/// `-alpha_{floor(t/B)} g^{B floor(t/B)}` on the last step of each window.
pub fn gd_step(
    state: &NetworkState,
    mixing: &[CoordinateMixingSet],
    spec: &PerturbationSpec,
    masks: &StepMasks,
    oracle: &ObjectiveOracle,
    steps: &StepSchedule,
) -> NetworkState {
    let n = state.n();
    let mut z = mix(state, mixing, spec, masks);
    if spec.is_window_end(state.t) {
        let alpha = steps.alpha(state.t / spec.window);
        let g = state.stored_gradient.as_ref().expect("gradient snapshot missing at window end");
        for i in 0..n {
            for m in 0..state.d() {
                z[(i, m)] -= alpha * g[(i, m)];
            }
        }
    }
    let mut next = NetworkState {
        z,
        stored_surplus: state.stored_surplus.clone(),
        stored_gradient: state.stored_gradient.clone(),
        t: state.t + 1,
    };
    if next.t % spec.window == 0 {
        next.stored_surplus = next.y();
        snapshot_gradient(&mut next, oracle);
    }
    next
}

/// State at a window start `kB`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSnapshot {
    pub k: usize,
    pub alpha: f64,
    pub zbar: DVector<f64>,
    pub f_zbar: f64,
    /// `||z_i - zbar||` for state rows.
    pub state_gaps: Vec<f64>,
    /// `||z_i||` for surplus rows.
    pub surplus_norms: Vec<f64>,
    /// `max |g_im|` over node states and `zbar` at this window start.
    pub grad_max: f64,
    /// `sum_i grad f_i(z_i)`.
    pub grad_sum: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct OptTrace {
    pub metrics: RunMetrics,
    pub windows: Vec<WindowSnapshot>,
    pub z0: DMatrix<f64>,
    pub x_star: Option<DVector<f64>>,
    pub f_star: Option<f64>,
    /// Largest per-entry gradient magnitude seen at window starts.
    pub d_measured: f64,
    pub n: usize,
    pub d: usize,
}

fn window_snapshot(state: &NetworkState, oracle: &ObjectiveOracle, steps: &StepSchedule, k: usize) -> WindowSnapshot {
    let n = state.n();
    let zbar = state.zbar();
    let g = state.stored_gradient.clone().unwrap_or_else(|| oracle.gradients(&state.x()));
    let mut grad_max = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        grad_max = grad_max.max(oracle.gradient(i, &zbar).amax());
    }
    let mut grad_sum = DVector::zeros(state.d());
    for row in g.row_iter() {
        grad_sum += row.transpose();
    }
    WindowSnapshot {
        k,
        alpha: steps.alpha(k),
        f_zbar: oracle.value(&zbar),
        state_gaps: (0..n).map(|i| (state.z.row(i).transpose() - &zbar).norm()).collect(),
        surplus_norms: (n..2 * n).map(|i| state.z.row(i).norm()).collect(),
        zbar,
        grad_max,
        grad_sum,
    }
}

/// Run the descent recursion for `horizon` steps from `x0` with zero surplus.
pub fn run_optimize(cfg: &OptRunConfig, x0: &DMatrix<f64>) -> Result<OptTrace> {
    let (n, d) = x0.shape();
    let cc = &cfg.consensus;
    cc.validate(d)?;
    cfg.steps.validate()?;
    if cfg.oracle.n() != n || cfg.oracle.d() != d || cc.schedule.n != n {
        return Err(Error::InvalidConfig(format!(
            "shape mismatch: state {n}x{d}, oracle {}x{}, schedule n={}",
            cfg.oracle.n(),
            cfg.oracle.d(),
            cc.schedule.n
        )));
    }
    let spec = cc.perturbation;
    let x_star = cfg.x_star.clone().or_else(|| cfg.oracle.minimizer());
    let f_star = cfg.f_star.or_else(|| x_star.as_ref().map(|x| cfg.oracle.value(x)));
    let mut state = NetworkState::new(x0);
    snapshot_gradient(&mut state, &cfg.oracle);
    let recorder = x_star.as_ref().map(|xs| Recorder::new(x0, xs.clone()));
    let mut tracker = cc.track_spectrum.then(|| SpectralTracker::new(n, d, spec));
    let per_step = bits_per_step(n, cc.k, d);
    let mut metrics = RunMetrics::default();
    let mut windows = Vec::new();
    let mut bits = 0u64;

    let record = |state: &NetworkState, bits: u64, metrics: &mut RunMetrics| -> Result<()> {
        let zbar = state.zbar();
        let residual = match &recorder {
            Some(r) => r.residual(&state.x()),
            None => Recorder::new(x0, zbar.clone()).residual(&state.x()),
        };
        if !residual.is_finite() || residual > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { t: state.t, residual, limit: DIVERGENCE_LIMIT });
        }
        metrics.steps.push(StepRecord {
            t: state.t,
            residual,
            loss: cfg.oracle.value(&zbar) - f_star.unwrap_or(0.0),
            correct_rate: cfg.oracle.correct_rate(&zbar).unwrap_or(f64::NAN),
            max_surplus_norm: state.max_surplus_norm(),
            mass: state.mass(),
            bits_cumulative: bits,
        });
        metrics.disagreement.push(disagreement(state, &zbar));
        Ok(())
    };

    record(&state, bits, &mut metrics)?;
    windows.push(window_snapshot(&state, &cfg.oracle, &cfg.steps, 0));
    for t in 0..cc.horizon {
        let (masks, mixing) = step_inputs(&cc.schedule, d, cc.k, cc.seed, cc.mask_convention, t)?;
        if let Some(tr) = tracker.as_mut() {
            tr.observe(t, &mixing)?;
        }
        state = gd_step(&state, &mixing, &spec, &masks, &cfg.oracle, &cfg.steps);
        bits += per_step;
        record(&state, bits, &mut metrics)?;
        if state.t % spec.window == 0 {
            windows.push(window_snapshot(&state, &cfg.oracle, &cfg.steps, state.t / spec.window));
        }
    }
    if let Some(tr) = tracker {
        metrics.windows = tr.records;
    }
    let d_measured = windows.iter().map(|w| w.grad_max).fold(0.0, f64::max);
    Ok(OptTrace { metrics, windows, z0: state_z0(x0), x_star, f_star, d_measured, n, d })
}

fn state_z0(x0: &DMatrix<f64>) -> DMatrix<f64> {
    NetworkState::new(x0).z
}

/// Both sides of the optimality bound at one prefix horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Row {
    /// Windows included: `k = 0..horizon`.
    pub horizon: usize,
    pub lhs: f64,
    pub rhs_printed: f64,
    pub rhs_squared: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theorem3Report {
    pub rows: Vec<Theorem3Row>,
    pub printed_holds: bool,
    pub squared_holds: bool,
    pub d_prime: f64,
}

/// Evaluate, for every prefix of windows,
/// `2 sum alpha_k (f(zbar^kB) - f*)` against
/// `n ||zbar0 - x*|| + n D'^2 sum alpha^2 + (4D'/n) sum_i sum_k alpha_k ||z_i - zbar||`
/// and the variant with `||zbar0 - x*||^2` and `D'^2 sum alpha^2`.
pub fn verify_theorem3(trace: &OptTrace, d_bound: Option<f64>) -> Result<Theorem3Report> {
    let x_star = trace.x_star.as_ref().ok_or_else(|| Error::InvalidConfig("Theorem 3 check needs x*".into()))?;
    let f_star = trace.f_star.ok_or_else(|| Error::InvalidConfig("Theorem 3 check needs f*".into()))?;
    let n = trace.n as f64;
    let d_prime = (trace.d as f64).sqrt() * d_bound.unwrap_or(trace.d_measured);
    let init = (&trace.windows[0].zbar - x_star).norm();
    let (mut lhs, mut sq, mut gap) = (0.0, 0.0, 0.0);
    let mut rows = Vec::with_capacity(trace.windows.len());
    for (h, w) in trace.windows.iter().enumerate() {
        lhs += 2.0 * w.alpha * (w.f_zbar - f_star);
        sq += w.alpha * w.alpha;
        gap += w.alpha * w.state_gaps.iter().sum::<f64>();
        let tail = 4.0 * d_prime / n * gap;
        rows.push(Theorem3Row {
            horizon: h + 1,
            lhs,
            rhs_printed: n * init + n * d_prime * d_prime * sq + tail,
            rhs_squared: init * init + d_prime * d_prime * sq + tail,
        });
    }
    Ok(Theorem3Report {
        printed_holds: rows.iter().all(|r| r.lhs <= r.rhs_printed),
        squared_holds: rows.iter().all(|r| r.lhs <= r.rhs_squared),
        rows,
        d_prime,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma3Report {
    pub passed: bool,
    /// `(k, state bound, worst state gap, surplus bound, worst surplus norm)`.
    pub rows: Vec<(usize, f64, f64, f64, f64)>,
}

/// Window-start disagreement bound:
/// `Gamma s^k S0 + sqrt(d) n Gamma D sum_{r=1}^{k-1} s^{k-r} alpha_{r-1} + 2 sqrt(d) D alpha_{k-1}`,
/// applied to `||z_i - zbar||` (state rows) and `||z_i||` (surplus rows).
pub fn lemma3_bound(k: usize, gamma: f64, sigma_hat: f64, sum_abs_z0: f64, d: usize, n: usize, d_bound: f64, steps: &StepSchedule) -> f64 {
    let sd = (d as f64).sqrt();
    let mut tail = 0.0;
    for r in 1..k {
        tail += sigma_hat.powi((k - r) as i32) * steps.alpha(r - 1);
    }
    gamma * sigma_hat.powi(k as i32) * sum_abs_z0 + sd * n as f64 * gamma * d_bound * tail + 2.0 * sd * d_bound * steps.alpha_before(k)
}

pub fn verify_lemma3(trace: &OptTrace, gamma: f64, sigma_hat: f64, steps: &StepSchedule, d_bound: Option<f64>) -> Lemma3Report {
    let s0: f64 = trace.z0.iter().map(|v| v.abs()).sum();
    let dm = d_bound.unwrap_or(trace.d_measured);
    let mut rows = Vec::with_capacity(trace.windows.len());
    let mut passed = true;
    for w in &trace.windows {
        let b = lemma3_bound(w.k, gamma, sigma_hat, s0, trace.d, trace.n, dm, steps);
        let gap = w.state_gaps.iter().copied().fold(0.0, f64::max);
        let sur = w.surplus_norms.iter().copied().fold(0.0, f64::max);
        passed &= gap <= b && sur <= b;
        rows.push((w.k, b, gap, b, sur));
    }
    Lemma3Report { passed, rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub c1: f64,
    pub c2: f64,
    /// `(horizon, f_min - f*, (C1 + C2 sum alpha^2) / sum alpha)`.
    pub curve: Vec<(usize, f64, f64)>,
    pub holds: bool,
}

/// Constants of the `O(ln T / sqrt T)` rate and the resulting bound curve.
pub fn rate_constants(trace: &OptTrace, gamma: f64, sigma_hat: f64, d_bound: Option<f64>) -> Result<RateReport> {
    if sigma_hat >= 1.0 {
        return Err(Error::SigmaNotContractive(sigma_hat));
    }
    let x_star = trace.x_star.as_ref().ok_or_else(|| Error::InvalidConfig("rate constants need x*".into()))?;
    let f_star = trace.f_star.ok_or_else(|| Error::InvalidConfig("rate constants need f*".into()))?;
    let n = trace.n as f64;
    let dp = (trace.d as f64).sqrt() * d_bound.unwrap_or(trace.d_measured);
    let row_norms: f64 = trace.z0.row_iter().map(|r| r.norm()).sum();
    let first = (&trace.windows[0].zbar - x_star).norm_squared();
    let last = (&trace.windows.last().unwrap().zbar - x_star).norm_squared();
    let c1 = n / 2.0 * (first - last) + dp * gamma * row_norms / (1.0 - sigma_hat * sigma_hat);
    let c2 = n * dp * dp / 2.0 + 4.0 * dp * dp + dp * gamma * row_norms + 2.0 * dp * dp * gamma / (1.0 - sigma_hat);
    let (mut sa, mut sq, mut fmin) = (0.0, 0.0, f64::INFINITY);
    let mut curve = Vec::with_capacity(trace.windows.len());
    for (h, w) in trace.windows.iter().enumerate() {
        sa += w.alpha;
        sq += w.alpha * w.alpha;
        fmin = fmin.min(w.f_zbar);
        if sa > 0.0 {
            curve.push((h + 1, fmin - f_star, (c1 + c2 * sq) / sa));
        }
    }
    let holds = curve.iter().all(|&(_, lhs, rhs)| lhs <= rhs);
    Ok(RateReport { c1, c2, curve, holds })
}
