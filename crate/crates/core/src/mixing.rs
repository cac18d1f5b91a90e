//! Sparsification-aware mixing matrices and their spectral diagnostics.
//!
//! For every coordinate `m` the in-weights are renormalized over the senders
//! whose state message actually carries `m`, giving a row-stochastic `A_m`;
//! the out-weights become a column-stochastic `B_m`. They are assembled into
//! the `2n x 2n` matrix `[[A_m, 0], [I - A_m, B_m]]` whose columns sum to one.
//! Once per window of `B` steps the perturbation `eps * F` with
//! `F = [[0, I], [0, -I]]` is added, which splits the double eigenvalue 1.

use nalgebra::DMatrix;

use crate::compression::{draw_mask_seeded, MaskOwner, MessageKind, SparsityMask};
use crate::eigen;
use crate::error::{Error, Result};
use crate::topology::{build_weights, ConnectivityWeights, TopologySchedule};

/// Moduli within this distance of 1 count toward the eigenvalue-1 multiplicity.
pub const UNIT_MODULUS_TOL: f64 = 1e-8;

/// Which mask decides the support of column `j` of `B_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskConvention {
    /// Column `j` follows sender `j`'s surplus mask: kept columns equal the
    /// raw out-weights, dropped columns collapse to `e_j`.
    #[default]
    SenderMask,
    /// The receiver-indexed support set, renormalized over surviving rows.
    /// Does not conserve mass.
    LiteralReceiver,
}

/// Masks of every outgoing message at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMasks {
    pub state: Vec<SparsityMask>,
    pub surplus: Vec<SparsityMask>,
}

impl StepMasks {
    pub fn full(n: usize, d: usize, t: usize) -> Self {
        let mk = |kind| (0..n).map(|node| SparsityMask::full(d, MaskOwner { node, kind, t })).collect();
        Self { state: mk(MessageKind::State), surplus: mk(MessageKind::Surplus) }
    }

    /// Independent masks for the state and surplus message of each node,
    /// each from its own `(seed, t, node, kind)` stream.
    pub fn draw(seed: u64, n: usize, d: usize, k: usize, t: usize) -> Result<Self> {
        if k == d {
            return Ok(Self::full(n, d, t));
        }
        let mk = |kind| {
            (0..n)
                .map(|node| draw_mask_seeded(seed, d, k, MaskOwner { node, kind, t }))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Self { state: mk(MessageKind::State)?, surplus: mk(MessageKind::Surplus)? })
    }

    pub fn n(&self) -> usize {
        self.state.len()
    }
}

/// Row-normalized in-weights for coordinate `m`.
pub fn normalize_in(w: &ConnectivityWeights, state_masks: &[SparsityMask], m: usize) -> DMatrix<f64> {
    let n = w.w_in.nrows();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let support = |j: usize| w.w_in[(i, j)] > 0.0 && (j == i || state_masks[j].keeps(m));
        let full = (0..n).all(|j| w.w_in[(i, j)] == 0.0 || support(j));
        if full {
            for j in 0..n {
                a[(i, j)] = w.w_in[(i, j)];
            }
            continue;
        }
        let total: f64 = (0..n).filter(|&j| support(j)).map(|j| w.w_in[(i, j)]).sum();
        for j in (0..n).filter(|&j| support(j)) {
            a[(i, j)] = w.w_in[(i, j)] / total;
        }
    }
    a
}

/// Column-normalized out-weights for coordinate `m`.
pub fn normalize_out(
    w: &ConnectivityWeights,
    surplus_masks: &[SparsityMask],
    m: usize,
    convention: MaskConvention,
) -> DMatrix<f64> {
    let n = w.w_out.nrows();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        match convention {
            MaskConvention::SenderMask => {
                if surplus_masks[j].keeps(m) {
                    b.set_column(j, &w.w_out.column(j));
                } else {
                    b[(j, j)] = 1.0;
                }
            }
            MaskConvention::LiteralReceiver => {
                let support = |i: usize| w.w_out[(i, j)] > 0.0 && (i == j || surplus_masks[i].keeps(m));
                let full = (0..n).all(|i| w.w_out[(i, j)] == 0.0 || support(i));
                if full {
                    b.set_column(j, &w.w_out.column(j));
                    continue;
                }
                let total: f64 = (0..n).filter(|&i| support(i)).map(|i| w.w_out[(i, j)]).sum();
                for i in (0..n).filter(|&i| support(i)) {
                    b[(i, j)] = w.w_out[(i, j)] / total;
                }
            }
        }
    }
    b
}

/// `[[A, 0], [I - A, B]]`.
pub fn assemble_mixing(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) - a));
    m.view_mut((n, n), (n, n)).copy_from(b);
    m
}

/// `F = [[0, I], [0, -I]]`.
pub fn perturbation_matrix(n: usize) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        f[(i, n + i)] = 1.0;
        f[(n + i, n + i)] = -1.0;
    }
    f
}

/// Single-step perturbed form `[[A, eps I], [I - A, B - eps I]]`.
pub fn compact_perturbed(a: &DMatrix<f64>, b: &DMatrix<f64>, epsilon: f64) -> DMatrix<f64> {
    assemble_mixing(a, b) + perturbation_matrix(a.nrows()) * epsilon
}

/// `mbars[B-1] * ... * mbars[0] + eps * F` for one window, oldest first in the slice.
pub fn window_product(mbars: &[DMatrix<f64>], epsilon: f64) -> DMatrix<f64> {
    let first = mbars.first().expect("window product of zero matrices");
    let dim = first.nrows();
    let mut prod = DMatrix::identity(dim, dim);
    for m in mbars {
        prod = m * prod;
    }
    prod + perturbation_matrix(dim / 2) * epsilon
}

/// `(1/n) [1; 0] [1^T 1^T]`, the limit of converging products.
pub fn limit_matrix(n: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(2 * n, 2 * n);
    let v = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..2 * n {
            l[(i, j)] = v;
        }
    }
    l
}

/// Normalized weights and mixing data for one coordinate at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateMixingSet {
    pub m: usize,
    pub t: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Support of row `i` of `A_m`.
    pub kept_senders: Vec<Vec<usize>>,
    /// Support of column `j` of `B_m`.
    pub kept_receivers: Vec<Vec<usize>>,
}

impl CoordinateMixingSet {
    pub fn build(w: &ConnectivityWeights, masks: &StepMasks, m: usize, convention: MaskConvention) -> Self {
        let a = normalize_in(w, &masks.state, m);
        let b = normalize_out(w, &masks.surplus, m, convention);
        let n = a.nrows();
        let kept_senders = (0..n).map(|i| (0..n).filter(|&j| a[(i, j)] > 0.0).collect()).collect();
        let kept_receivers = (0..n).map(|j| (0..n).filter(|&i| b[(i, j)] > 0.0).collect()).collect();
        Self { m, t: w.t, a, b, kept_senders, kept_receivers }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn mbar(&self) -> DMatrix<f64> {
        assemble_mixing(&self.a, &self.b)
    }
}

/// All `d` coordinate mixing sets of one step.
pub fn build_step_mixing(
    w: &ConnectivityWeights,
    masks: &StepMasks,
    d: usize,
    convention: MaskConvention,
) -> Vec<CoordinateMixingSet> {
    (0..d).map(|m| CoordinateMixingSet::build(w, masks, m, convention)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub window: usize,
}

impl PerturbationSpec {
    pub fn new(epsilon: f64, window: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidConfig(format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        if window == 0 {
            return Err(Error::InvalidConfig("window B must be >= 1".into()));
        }
        Ok(Self { epsilon, window })
    }

    pub fn f_structure(&self, n: usize) -> DMatrix<f64> {
        perturbation_matrix(n)
    }

    /// True on the last step of a window, when the stored surplus is applied.
    pub fn is_window_end(&self, t: usize) -> bool {
        t % self.window == self.window - 1
    }
}

/// `Gamma = sqrt(2 n d)`.
pub fn gamma(n: usize, d: usize) -> f64 {
    ((2 * n * d) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Eigenvalue moduli of the input matrix, non-increasing.
    pub moduli: Vec<f64>,
    /// Spectral radius of `M - limit`.
    pub sigma: f64,
    pub gamma: f64,
    pub eigenvalue_1_multiplicity: usize,
    /// Largest modulus strictly below `1 - UNIT_MODULUS_TOL`; differs from
    /// `sigma` only when eigenvalue 1 is repeated.
    pub subunit_modulus: f64,
}

impl SpectralReport {
    pub fn spectral_gap(&self) -> f64 {
        1.0 - self.sigma
    }
}

pub fn spectral_report(m: &DMatrix<f64>, d: usize) -> Result<SpectralReport> {
    assert!(m.is_square() && m.nrows() % 2 == 0, "expected a 2n x 2n matrix");
    let n = m.nrows() / 2;
    let moduli = eigen::sorted_moduli(m)?;
    let sigma = eigen::spectral_radius(&(m - limit_matrix(n)))?;
    let eigenvalue_1_multiplicity = moduli.iter().filter(|&&r| (r - 1.0).abs() <= UNIT_MODULUS_TOL).count();
    let subunit_modulus = moduli.iter().copied().find(|&r| r < 1.0 - UNIT_MODULUS_TOL).unwrap_or(0.0);
    Ok(SpectralReport { moduli, sigma, gamma: gamma(n, d), eigenvalue_1_multiplicity, subunit_modulus })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonBound {
    /// `min` over windows of `gamma_k`; 0 when some window violates the assumption.
    pub epsilon_bar: f64,
    pub per_window: Vec<f64>,
    pub lambda3: Vec<f64>,
    pub violated: bool,
}

/// Admissible perturbation: `min (1 - |lambda_3|)^n / (20 + 8n)^n` over the
/// given unperturbed window products.
pub fn epsilon_bound(products: &[DMatrix<f64>], n: usize) -> Result<EpsilonBound> {
    let scale = (20.0 + 8.0 * n as f64).powi(n as i32);
    let mut per_window = Vec::with_capacity(products.len());
    let mut lambda3 = Vec::with_capacity(products.len());
    let mut violated = false;
    for p in products {
        let moduli = eigen::sorted_moduli(p)?;
        let l3 = moduli.get(2).copied().unwrap_or(0.0);
        lambda3.push(l3);
        if l3 >= 1.0 - UNIT_MODULUS_TOL {
            log::warn!("|lambda_3| = {l3} >= 1: window product violates the connectivity assumption");
            violated = true;
            per_window.push(0.0);
        } else {
            per_window.push((1.0 - l3).powi(n as i32) / scale);
        }
    }
    let epsilon_bar = if violated { 0.0 } else { per_window.iter().copied().fold(f64::INFINITY, f64::min) };
    Ok(EpsilonBound { epsilon_bar, per_window, lambda3, violated })
}

/// `gamma` for a single `|lambda_3|` value.
pub fn gamma_threshold(lambda3: f64, n: usize) -> f64 {
    (1.0 - lambda3).max(0.0).powi(n as i32) / (20.0 + 8.0 * n as f64).powi(n as i32)
}

/// The coordinate-`m` mixing matrices for steps `0..steps`, using the same
/// mask streams as the consensus engine.
pub fn coordinate_mixing_sequence(
    schedule: &TopologySchedule,
    d: usize,
    k: usize,
    seed: u64,
    convention: MaskConvention,
    m: usize,
    steps: usize,
) -> Result<Vec<DMatrix<f64>>> {
    (0..steps)
        .map(|t| {
            let w = build_weights(schedule.at(t));
            let masks = StepMasks::draw(seed, schedule.n, d, k, t)?;
            Ok(CoordinateMixingSet::build(&w, &masks, m, convention).mbar())
        })
        .collect()
}

/// Induced infinity norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    /// `||M(kB-1:0) - limit||_inf` for `k = 1..=windows`.
    pub deviation: Vec<f64>,
    /// `Gamma * sigma_hat^k`.
    pub bound: Vec<f64>,
    pub window_sigma: Vec<f64>,
    pub sigma_hat: f64,
    pub gamma: f64,
    pub passed: bool,
}

impl DecayTrace {
    /// Least-squares slope of `ln deviation` against `k` over `from..` (1-based k).
    pub fn log_slope(&self, from: usize) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .deviation
            .iter()
            .enumerate()
            .skip(from.saturating_sub(1))
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| ((i + 1) as f64, v.ln()))
            .collect();
        linear_fit(&pts).0
    }
}

/// `(slope, intercept, r_squared)` of an ordinary least-squares line.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (0.0, pts.first().map_or(0.0, |p| p.1), 1.0);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

/// Track the perturbed window products of one coordinate and compare their
/// distance to the limit with `Gamma * sigma_hat^k`.
///
/// `mbars` holds the per-step unperturbed matrices, oldest first; its length
/// must cover `windows * window` steps.
pub fn verify_geometric_decay(
    mbars: &[DMatrix<f64>],
    epsilon: f64,
    window: usize,
    windows: usize,
    d: usize,
) -> Result<DecayTrace> {
    assert!(mbars.len() >= windows * window, "not enough mixing matrices for {windows} windows");
    let dim = mbars[0].nrows();
    let n = dim / 2;
    let limit = limit_matrix(n);
    let mut products = Vec::with_capacity(windows);
    let mut window_sigma = Vec::with_capacity(windows);
    for k in 0..windows {
        let p = window_product(&mbars[k * window..(k + 1) * window], epsilon);
        window_sigma.push(eigen::spectral_radius(&(&p - &limit))?);
        products.push(p);
    }
    let sigma_hat = window_sigma.iter().copied().fold(0.0, f64::max);
    let g = gamma(n, d);
    let mut acc = DMatrix::identity(dim, dim);
    let mut deviation = Vec::with_capacity(windows);
    let mut bound = Vec::with_capacity(windows);
    for (k, p) in products.iter().enumerate() {
        acc = p * acc;
        deviation.push(inf_norm(&(&acc - &limit)));
        bound.push(g * sigma_hat.powi(k as i32 + 1));
    }
    let passed = deviation.iter().zip(&bound).all(|(dv, b)| dv <= b);
    Ok(DecayTrace { deviation, bound, window_sigma, sigma_hat, gamma: g, passed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPrediction {
    pub q_eff: f64,
    pub lambda3_bound: f64,
    /// The bound carries information only when it is below 1.
    pub informative: bool,
}

/// Effective edge probability and `|lambda_3|` bound for ER graphs with mean
/// degree parameter `g` (so `p = g / n`) under `k`-of-`d` sparsification.
pub fn predict_sigma_er(n: usize, g: f64, k: usize, d: usize, window: usize) -> Result<SigmaPrediction> {
    if k == 0 || k > d || window == 0 || n == 0 {
        return Err(Error::InvalidConfig(format!("need 1 <= k <= d, B >= 1, n >= 1 (k={k}, d={d}, B={window})")));
    }
    let drop = 1.0 - k as f64 / d as f64;
    let survive2 = 1.0 - drop.powi(2 * window as i32);
    if g * survive2 <= 1.0 {
        return Err(Error::PredictorInapplicable(format!(
            "g(n) * (1 - (1 - k/d)^(2B)) = {} <= 1: sparsified graph not connected a.s.",
            g * survive2
        )));
    }
    let p = g / n as f64;
    let q_eff = p * survive2;
    let lambda3_bound = (4.0 / ((1.0 - drop.powi(window as i32)) * g)).sqrt();
    Ok(SigmaPrediction { q_eff, lambda3_bound, informative: lambda3_bound < 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_er_schedule, DirectedGraphSnapshot};

    fn owner(node: usize) -> MaskOwner {
        MaskOwner { node, kind: MessageKind::State, t: 0 }
    }

    fn masks_dropping(n: usize, d: usize, drop: &[usize], m: usize) -> Vec<SparsityMask> {
        (0..n)
            .map(|j| {
                if drop.contains(&j) {
                    let idx: Vec<usize> = (0..d).filter(|&x| x != m).collect();
                    SparsityMask::from_indices(d, idx, owner(j)).unwrap()
                } else {
                    SparsityMask::full(d, owner(j))
                }
            })
            .collect()
    }

    #[test]
    fn no_sparsification_is_identity_normalization() {
        let s = generate_er_schedule(6, 0.7, 1, 1, 5).unwrap();
        let w = build_weights(&s.snapshots[0]);
        let masks = StepMasks::full(6, 3, 0);
        assert_eq!(normalize_in(&w, &masks.state, 1), w.w_in);
        assert_eq!(normalize_out(&w, &masks.surplus, 1, MaskConvention::SenderMask), w.w_out);
        assert_eq!(normalize_out(&w, &masks.surplus, 1, MaskConvention::LiteralReceiver), w.w_out);
    }

    #[test]
    fn all_senders_drop_gives_self_only_row() {
        let w = build_weights(&DirectedGraphSnapshot::complete(4, 0));
        let masks = masks_dropping(4, 2, &[1, 2, 3], 0);
        let a = normalize_in(&w, &masks, 0);
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn third_sender_drop_renormalizes_row() {
        let w = build_weights(&DirectedGraphSnapshot::complete(3, 0));
        let masks = masks_dropping(3, 2, &[2], 0);
        let a = normalize_in(&w, &masks, 0);
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5, 0.0]);
        assert_eq!(a.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn sender_drop_keeps_mass_in_column() {
        let w = build_weights(&DirectedGraphSnapshot::complete(3, 0));
        let masks = masks_dropping(3, 2, &[1], 0);
        let b = normalize_out(&w, &masks, 0, MaskConvention::SenderMask);
        assert_eq!(b.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0]);
        assert_eq!(b.column(0), w.w_out.column(0));
    }

    #[test]
    fn literal_receiver_renormalizes_over_rows() {
        let w = build_weights(&DirectedGraphSnapshot::complete(3, 0));
        let masks = masks_dropping(3, 2, &[1], 0);
        let b = normalize_out(&w, &masks, 0, MaskConvention::LiteralReceiver);
        assert_eq!(b.column(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0, 0.5]);
        // receiver 1 keeps its own diagonal entry
        assert_eq!(b.column(1).iter().copied().collect::<Vec<_>>(), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn single_node_mixing_is_identity() {
        let one = DMatrix::from_element(1, 1, 1.0);
        assert_eq!(assemble_mixing(&one, &one), DMatrix::identity(2, 2));
    }

    #[test]
    fn two_node_block_assembly() {
        let w = build_weights(&DirectedGraphSnapshot::complete(2, 0));
        let m = assemble_mixing(&w.w_in, &w.w_out);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            0.5, 0.5, 0.0, 0.0,
            0.5, 0.5, 0.0, 0.0,
            0.5, -0.5, 0.5, 0.5,
            -0.5, 0.5, 0.5, 0.5,
        ]);
        assert_eq!(m, expected);
        let p = compact_perturbed(&w.w_in, &w.w_out, 0.05);
        assert_eq!(p, &expected + perturbation_matrix(2) * 0.05);
        assert_eq!(compact_perturbed(&w.w_in, &w.w_out, 0.0), expected);
    }

    #[test]
    fn window_product_edge_cases() {
        let i4 = DMatrix::<f64>::identity(4, 4);
        let p = window_product(&[i4.clone(), i4.clone()], 0.1);
        assert_eq!(p, &i4 + perturbation_matrix(2) * 0.1);
        let w = build_weights(&DirectedGraphSnapshot::complete(2, 0));
        assert_eq!(window_product(&[assemble_mixing(&w.w_in, &w.w_out)], 0.05), compact_perturbed(&w.w_in, &w.w_out, 0.05));
    }

    #[test]
    fn window_product_order_is_newest_left() {
        let s = generate_er_schedule(3, 0.8, 2, 1, 1).unwrap();
        let ms: Vec<_> = s.snapshots.iter().map(|g| {
            let w = build_weights(g);
            assemble_mixing(&w.w_in, &w.w_out)
        }).collect();
        let p = window_product(&ms, 0.0);
        assert!((p - &ms[1] * &ms[0]).abs().max() < 1e-15);
    }

    #[test]
    fn limit_matrix_has_zero_sigma() {
        let r = spectral_report(&limit_matrix(3), 1).unwrap();
        assert!(r.sigma.abs() < 1e-12);
    }

    #[test]
    fn identity_has_double_unit_eigenvalue() {
        let r = spectral_report(&DMatrix::identity(2, 2), 1).unwrap();
        assert_eq!(r.eigenvalue_1_multiplicity, 2);
        assert!((r.moduli[0] - 1.0).abs() < 1e-12 && (r.moduli[1] - 1.0).abs() < 1e-12);
        assert!(r.spectral_gap().abs() < 1e-12);
    }

    #[test]
    fn complete_pair_perturbed_has_gap() {
        let w = build_weights(&DirectedGraphSnapshot::complete(2, 0));
        let r = spectral_report(&compact_perturbed(&w.w_in, &w.w_out, 0.05), 1).unwrap();
        assert!(r.sigma < 1.0);
        assert_eq!(r.eigenvalue_1_multiplicity, 1);
        assert_eq!(r.gamma, 2.0);
    }

    #[test]
    fn epsilon_bound_arithmetic() {
        assert!((gamma_threshold(0.0, 2) - 1.0 / 1296.0).abs() < 1e-18);
        assert!((gamma_threshold(0.5, 2) - 0.25 / 1296.0).abs() < 1e-18);
        let eb = epsilon_bound(&[DMatrix::identity(4, 4)], 2).unwrap();
        assert!(eb.violated);
        assert_eq!(eb.epsilon_bar, 0.0);
    }

    #[test]
    fn sigma_predictor() {
        let p = predict_sigma_er(10, 9.0, 128, 128, 1).unwrap();
        assert!((p.q_eff - 0.9).abs() < 1e-15);
        assert!((p.lambda3_bound - 2.0 / 3.0).abs() < 1e-15);
        let p = predict_sigma_er(10, 9.0, 12, 128, 1).unwrap();
        assert!((p.lambda3_bound - (4.0 * 128.0 / (12.0 * 9.0f64)).sqrt()).abs() < 1e-12);
        assert!((p.lambda3_bound - 2.177).abs() < 1e-3);
        assert!(!p.informative);
        let p = predict_sigma_er(10, 9.0, 1, 2, 2).unwrap();
        assert!((p.q_eff - 0.9 * 0.9375).abs() < 1e-15);
        assert!(matches!(predict_sigma_er(10, 1.05, 1, 10, 1), Err(Error::PredictorInapplicable(_))));
    }

    #[test]
    fn decay_of_limit_itself_is_zero() {
        let l = limit_matrix(2);
        let tr = verify_geometric_decay(&vec![l; 5], 0.0, 1, 5, 1).unwrap();
        assert!(tr.deviation.iter().all(|&v| v < 1e-14));
        assert!(tr.passed);
    }
}
