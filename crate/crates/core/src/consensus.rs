//! Sparsified average consensus over jointly connected directed graphs.

use nalgebra::{DMatrix, DVector};

use crate::compression::count_bits_sparse;
use crate::eigen;
use crate::error::{Error, Result};
use crate::metrics::{DisagreementRecord, RunMetrics, StepRecord, WindowRecord};
use crate::mixing::{
    build_step_mixing, gamma, gamma_threshold, limit_matrix, perturbation_matrix, CoordinateMixingSet,
    MaskConvention, PerturbationSpec, StepMasks, UNIT_MODULUS_TOL,
};
use crate::topology::{build_weights, TopologySchedule};

/// Joint state `z` (states on top, surpluses below) plus the window-start
/// snapshots used by the perturbation and gradient terms.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub z: DMatrix<f64>,
    /// `y` at the last window start.
    pub stored_surplus: DMatrix<f64>,
    /// Gradient at the last window start; only the optimizer fills it.
    pub stored_gradient: Option<DMatrix<f64>>,
    pub t: usize,
}

impl NetworkState {
    /// `x0` is `n x d`; the surplus starts at zero.
    pub fn new(x0: &DMatrix<f64>) -> Self {
        let (n, d) = x0.shape();
        Self::with_surplus(x0, &DMatrix::zeros(n, d))
    }

    pub fn with_surplus(x0: &DMatrix<f64>, y0: &DMatrix<f64>) -> Self {
        assert_eq!(x0.shape(), y0.shape(), "state and surplus shapes differ");
        let (n, d) = x0.shape();
        let mut z = DMatrix::zeros(2 * n, d);
        z.view_mut((0, 0), (n, d)).copy_from(x0);
        z.view_mut((n, 0), (n, d)).copy_from(y0);
        Self { z, stored_surplus: y0.clone(), stored_gradient: None, t: 0 }
    }

    pub fn n(&self) -> usize {
        self.z.nrows() / 2
    }

    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    pub fn x(&self) -> DMatrix<f64> {
        self.z.rows(0, self.n()).into_owned()
    }

    pub fn y(&self) -> DMatrix<f64> {
        self.z.rows(self.n(), self.n()).into_owned()
    }

    /// `sum_{i, m} z_im` over all `2n` rows.
    pub fn mass(&self) -> f64 {
        self.z.iter().sum()
    }

    /// `(1/n) sum_{i=1}^{2n} z_i`.
    pub fn zbar(&self) -> DVector<f64> {
        let n = self.n();
        let mut v = DVector::zeros(self.d());
        for row in self.z.row_iter() {
            v += row.transpose();
        }
        v / n as f64
    }

    pub fn max_surplus_norm(&self) -> f64 {
        let n = self.n();
        (n..2 * n).map(|i| self.z.row(i).norm()).fold(0.0, f64::max)
    }

    pub(crate) fn refresh_surplus(&mut self) {
        self.stored_surplus = self.y();
    }
}

/// `(1/n) sum x_i + (1/n) sum y_i`.
pub fn consensus_target(x0: &DMatrix<f64>, y0: &DMatrix<f64>) -> DVector<f64> {
    let n = x0.nrows() as f64;
    let mut v = DVector::zeros(x0.ncols());
    for (rx, ry) in x0.row_iter().zip(y0.row_iter()) {
        v += rx.transpose() + ry.transpose();
    }
    v / n
}

#[derive(Debug, Clone)]
pub struct ConsensusConfig {
    pub schedule: TopologySchedule,
    pub k: usize,
    pub perturbation: PerturbationSpec,
    pub horizon: usize,
    pub seed: u64,
    pub mask_convention: MaskConvention,
    /// Compute per-window spectra of every coordinate's product.
    pub track_spectrum: bool,
}

impl ConsensusConfig {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.k == 0 || self.k > d {
            return Err(Error::InvalidConfig(format!("need 1 <= k <= d, got k={}, d={d}", self.k)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon T must be >= 1".into()));
        }
        if self.schedule.is_empty() {
            return Err(Error::InvalidConfig("empty topology schedule".into()));
        }
        PerturbationSpec::new(self.perturbation.epsilon, self.perturbation.window)?;
        Ok(())
    }
}

/// `sum_j [Mbar_m]_ij [Q(z_j)]_m` for every coordinate, plus the window-end
/// perturbation `eps * F z^{B floor(t/B)}`. No snapshot refresh.
pub(crate) fn mix(
    state: &NetworkState,
    mixing: &[CoordinateMixingSet],
    spec: &PerturbationSpec,
    masks: &StepMasks,
) -> DMatrix<f64> {
    let n = state.n();
    let d = state.d();
    assert_eq!(mixing.len(), d, "one mixing set per coordinate");
    let mut out = DMatrix::zeros(2 * n, d);
    for (m, set) in mixing.iter().enumerate() {
        let a = &set.a;
        let b = &set.b;
        // sparsified values as seen by a receiver `i` from sender `j`
        let qx = |j: usize, i: usize| if j == i || masks.state[j].keeps(m) { state.z[(j, m)] } else { 0.0 };
        let qy = |j: usize, i: usize| if j == i || masks.surplus[j].keeps(m) { state.z[(n + j, m)] } else { 0.0 };
        for i in 0..n {
            // difference form: exact when all states already agree
            let xi = state.z[(i, m)];
            let mut pull = 0.0;
            for j in 0..n {
                if j != i {
                    pull += a[(i, j)] * (qx(j, i) - xi);
                }
            }
            out[(i, m)] = xi + pull;
            let mut acc = -pull;
            for j in 0..n {
                acc += b[(i, j)] * qy(j, i);
            }
            out[(n + i, m)] = acc;
        }
    }
    if spec.is_window_end(state.t) {
        let eps = spec.epsilon;
        for i in 0..n {
            for m in 0..d {
                let s = state.stored_surplus[(i, m)];
                out[(i, m)] += eps * s;
                out[(n + i, m)] -= eps * s;
            }
        }
    }
    out
}

/// One step of the sparsified consensus recursion.
pub fn consensus_step(
    state: &NetworkState,
    mixing: &[CoordinateMixingSet],
    spec: &PerturbationSpec,
    masks: &StepMasks,
) -> NetworkState {
    let mut next = NetworkState {
        z: mix(state, mixing, spec, masks),
        stored_surplus: state.stored_surplus.clone(),
        stored_gradient: state.stored_gradient.clone(),
        t: state.t + 1,
    };
    if next.t % spec.window == 0 {
        next.refresh_surplus();
    }
    next
}

/// Masks and coordinate mixing sets of step `t`.
pub fn step_inputs(
    schedule: &TopologySchedule,
    d: usize,
    k: usize,
    seed: u64,
    convention: MaskConvention,
    t: usize,
) -> Result<(StepMasks, Vec<CoordinateMixingSet>)> {
    let w = build_weights(schedule.at(t));
    let masks = StepMasks::draw(seed, schedule.n, d, k, t)?;
    let mixing = build_step_mixing(&w, &masks, d, convention);
    Ok((masks, mixing))
}

/// Value bits sent per step: every node broadcasts one state and one surplus message.
pub fn bits_per_step(n: usize, k: usize, d: usize) -> u64 {
    2 * n as u64 * count_bits_sparse(k, d).value_bits
}

/// Accumulates each coordinate's window product and summarizes its spectrum.
#[derive(Debug, Clone)]
pub struct SpectralTracker {
    n: usize,
    spec: PerturbationSpec,
    products: Vec<DMatrix<f64>>,
    pub records: Vec<WindowRecord>,
}

impl SpectralTracker {
    pub fn new(n: usize, d: usize, spec: PerturbationSpec) -> Self {
        Self { n, spec, products: vec![DMatrix::identity(2 * n, 2 * n); d], records: Vec::new() }
    }

    /// Fold in step `t`'s mixing sets; closes the window when `t` ends one.
    pub fn observe(&mut self, t: usize, mixing: &[CoordinateMixingSet]) -> Result<()> {
        for (p, set) in self.products.iter_mut().zip(mixing) {
            *p = set.mbar() * &*p;
        }
        if !self.spec.is_window_end(t) {
            return Ok(());
        }
        let limit = limit_matrix(self.n);
        let f = perturbation_matrix(self.n) * self.spec.epsilon;
        let mut sigma: f64 = 0.0;
        let mut eigmult = 0;
        let mut eps_bound = f64::INFINITY;
        for p in &mut self.products {
            let unperturbed = eigen::sorted_moduli(p)?;
            let l3 = unperturbed.get(2).copied().unwrap_or(0.0);
            eps_bound = eps_bound.min(if l3 >= 1.0 - UNIT_MODULUS_TOL { 0.0 } else { gamma_threshold(l3, self.n) });
            let perturbed = &*p + &f;
            let moduli = eigen::sorted_moduli(&perturbed)?;
            eigmult = eigmult.max(moduli.iter().filter(|&&r| (r - 1.0).abs() <= UNIT_MODULUS_TOL).count());
            sigma = sigma.max(eigen::spectral_radius(&(perturbed - &limit))?);
            *p = DMatrix::identity(2 * self.n, 2 * self.n);
        }
        self.records.push(WindowRecord { k: t / self.spec.window, sigma, eigmult, epsilon_bound: eps_bound });
        Ok(())
    }
}

/// Tracks the residual normalizer and node disagreement against a fixed target.
pub(crate) struct Recorder {
    target: DVector<f64>,
    initial_gap: f64,
}

impl Recorder {
    pub(crate) fn new(x0: &DMatrix<f64>, target: DVector<f64>) -> Self {
        let initial_gap = stacked_gap(x0, &target);
        Self { target, initial_gap }
    }

    pub(crate) fn residual(&self, x: &DMatrix<f64>) -> f64 {
        let gap = stacked_gap(x, &self.target);
        if self.initial_gap == 0.0 {
            gap
        } else {
            gap / self.initial_gap
        }
    }
}

fn stacked_gap(x: &DMatrix<f64>, target: &DVector<f64>) -> f64 {
    x.row_iter().map(|r| (r.transpose() - target).norm_squared()).sum::<f64>().sqrt()
}

/// Disagreement of node states from `zbar` and surplus sizes.
pub fn disagreement(state: &NetworkState, zbar: &DVector<f64>) -> DisagreementRecord {
    let n = state.n();
    let gaps: Vec<f64> = (0..n).map(|i| (state.z.row(i).transpose() - zbar).norm()).collect();
    DisagreementRecord {
        t: state.t,
        max_state_gap: gaps.iter().copied().fold(0.0, f64::max),
        sum_state_gap: gaps.iter().sum(),
        max_surplus: state.max_surplus_norm(),
    }
}

/// Run the consensus recursion for `cfg.horizon` steps from `x0` with zero surplus.
///
/// Records `T + 1` rows (`t = 0..=T`).
pub fn run_consensus(cfg: &ConsensusConfig, x0: &DMatrix<f64>) -> Result<RunMetrics> {
    let (n, d) = x0.shape();
    cfg.validate(d)?;
    if cfg.schedule.n != n {
        return Err(Error::InvalidConfig(format!("schedule has n={}, initial state has {n} rows", cfg.schedule.n)));
    }
    let spec = cfg.perturbation;
    let target = consensus_target(x0, &DMatrix::zeros(n, d));
    let recorder = Recorder::new(x0, target.clone());
    let mut state = NetworkState::new(x0);
    let mut tracker = cfg.track_spectrum.then(|| SpectralTracker::new(n, d, spec));
    let per_step = bits_per_step(n, cfg.k, d);
    let mut metrics = RunMetrics::default();
    let mut bits = 0u64;
    let push = |state: &NetworkState, bits: u64, metrics: &mut RunMetrics| {
        metrics.steps.push(StepRecord {
            t: state.t,
            residual: recorder.residual(&state.x()),
            loss: f64::NAN,
            correct_rate: f64::NAN,
            max_surplus_norm: state.max_surplus_norm(),
            mass: state.mass(),
            bits_cumulative: bits,
        });
        metrics.disagreement.push(disagreement(state, &target));
    };
    push(&state, bits, &mut metrics);
    for t in 0..cfg.horizon {
        let (masks, mixing) = step_inputs(&cfg.schedule, d, cfg.k, cfg.seed, cfg.mask_convention, t)?;
        if let Some(tr) = tracker.as_mut() {
            tr.observe(t, &mixing)?;
        }
        state = consensus_step(&state, &mixing, &spec, &masks);
        bits += per_step;
        push(&state, bits, &mut metrics);
    }
    if let Some(tr) = tracker {
        if let Some(w) = tr.records.iter().find(|w| w.epsilon_bound < spec.epsilon) {
            log::warn!(
                "epsilon = {} exceeds the admissible bound {:e} observed in window {}",
                spec.epsilon,
                w.epsilon_bound,
                w.k
            );
        }
        metrics.windows = tr.records;
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub passed: bool,
    /// Steps where the state bound failed.
    pub state_violations: Vec<usize>,
    /// Steps where the surplus bound failed.
    pub surplus_violations: Vec<usize>,
    /// `max_t lhs / bound` over both checks.
    pub worst_ratio: f64,
}

/// `Gamma * sigma_hat^{floor(t/B)} * sum |z0|`: the bound for step `t`,
/// counting only completed windows.
pub fn theorem1_bound(t: usize, window: usize, sigma_hat: f64, gamma: f64, sum_abs_z0: f64) -> f64 {
    gamma * sigma_hat.powi((t / window) as i32) * sum_abs_z0
}

/// Check `||x_i^t - zbar|| <= bound(t)` and `||y_i^t|| <= bound(t)` at every
/// recorded step.
pub fn verify_theorem1(
    trace: &RunMetrics,
    window: usize,
    sigma_hat: f64,
    gamma: f64,
    sum_abs_z0: f64,
) -> BoundCheck {
    let mut state_violations = Vec::new();
    let mut surplus_violations = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for rec in &trace.disagreement {
        let bound = theorem1_bound(rec.t, window, sigma_hat, gamma, sum_abs_z0);
        if rec.max_state_gap > bound {
            state_violations.push(rec.t);
        }
        if rec.max_surplus > bound {
            surplus_violations.push(rec.t);
        }
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(rec.max_state_gap.max(rec.max_surplus) / bound);
        }
    }
    BoundCheck {
        passed: state_violations.is_empty() && surplus_violations.is_empty(),
        state_violations,
        surplus_violations,
        worst_ratio,
    }
}

/// `sum_{j,m} |z0_jm|` over all `2n` rows.
pub fn sum_abs(z: &DMatrix<f64>) -> f64 {
    z.iter().map(|v| v.abs()).sum()
}

/// `Gamma = sqrt(2nd)` for a state of this shape.
pub fn gamma_for(state: &NetworkState) -> f64 {
    gamma(state.n(), state.d())
}
