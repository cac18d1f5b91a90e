//! Message compression.
//!
//! [`draw_mask`] picks exactly `k` of `d` coordinates uniformly (the top-k
//! style sparsifier used by the main algorithms); [`quantize`] is the
//! unbiased stochastic quantizer used by the quantized baselines.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    State,
    Surplus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskOwner {
    pub node: usize,
    pub kind: MessageKind,
    pub t: usize,
}

/// Support of one sparsified message: exactly `k` distinct indices in `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityMask {
    d: usize,
    kept: Vec<usize>,
    member: Vec<bool>,
    pub owner: MaskOwner,
}

impl SparsityMask {
    /// Keeps every coordinate.
    pub fn full(d: usize, owner: MaskOwner) -> Self {
        Self { d, kept: (0..d).collect(), member: vec![true; d], owner }
    }

    pub fn from_indices(d: usize, mut kept: Vec<usize>, owner: MaskOwner) -> Result<Self> {
        kept.sort_unstable();
        kept.dedup();
        if kept.is_empty() || kept.last().is_some_and(|&m| m >= d) {
            return Err(Error::InvalidConfig(format!("mask indices must be non-empty and below d={d}")));
        }
        let mut member = vec![false; d];
        for &m in &kept {
            member[m] = true;
        }
        Ok(Self { d, kept, member, owner })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.kept.len()
    }

    /// Sorted kept indices.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn keeps(&self, m: usize) -> bool {
        self.member[m]
    }

    pub fn is_full(&self) -> bool {
        self.kept.len() == self.d
    }
}

/// Uniform random `k`-subset of `[0, d)` via a partial Fisher-Yates shuffle.
pub fn draw_mask<R: Rng>(d: usize, k: usize, owner: MaskOwner, rng: &mut R) -> Result<SparsityMask> {
    if k == 0 || k > d {
        return Err(Error::InvalidConfig(format!("compression budget must satisfy 1 <= k <= d, got k={k}, d={d}")));
    }
    if k == d {
        return Ok(SparsityMask::full(d, owner));
    }
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..k {
        let j = rng.random_range(i..d);
        idx.swap(i, j);
    }
    idx.truncate(k);
    SparsityMask::from_indices(d, idx, owner)
}

/// Mask for `(run seed, t, node, kind)` drawn from its own sub-stream.
pub fn draw_mask_seeded(seed: u64, d: usize, k: usize, owner: MaskOwner) -> Result<SparsityMask> {
    let kind = match owner.kind {
        MessageKind::State => 0,
        MessageKind::Surplus => 1,
    };
    let mut r = rng::stream(seed, Domain::Mask, &[owner.t as u64, owner.node as u64, kind]);
    draw_mask(d, k, owner, &mut r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMessage {
    pub d: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseMessage {
    /// Dense vector with dropped coordinates zero-filled.
    pub fn densify(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.d];
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }
}

pub fn apply_mask(v: &[f64], mask: &SparsityMask) -> SparseMessage {
    assert_eq!(v.len(), mask.d(), "mask dimension mismatch");
    SparseMessage { d: v.len(), entries: mask.kept().iter().map(|&i| (i, v[i])).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerConfig {
    /// Number of levels; held as `f64` because matched budgets reach `2^62`.
    pub s: f64,
    pub seed: u64,
}

impl QuantizerConfig {
    pub fn new(s: f64, seed: u64) -> Result<Self> {
        if !(s >= 1.0) || s.fract() != 0.0 {
            return Err(Error::InvalidConfig(format!("quantization level must be a positive integer, got {s}")));
        }
        Ok(Self { s, seed })
    }
}

/// Quantizer choice for the baselines; `Identity` keeps the unquantized
/// dynamics for regression testing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantizer {
    Stochastic(QuantizerConfig),
    Identity,
}

/// `out_i = sign(v_i) * ||v|| * xi_i` with `xi_i` rounded stochastically to
/// the lattice `{0, 1/s, ..., 1}` so that `E[out] = v`.
pub fn quantize<R: Rng>(v: &[f64], cfg: &QuantizerConfig, rng: &mut R) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    let s = cfg.s;
    v.iter()
        .map(|&x| {
            let r = (x.abs() / norm * s).min(s);
            let level = r.floor();
            let up = r - level;
            let xi = if up > 0.0 && rng.random::<f64>() < up { (level + 1.0) / s } else { level / s };
            x.signum() * norm * xi
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitBudget {
    pub s: f64,
    /// Value bits of one sparsified message, `64 q d`.
    pub sparse_bits: f64,
    /// Bits of one quantized message, `(log2 s + 1) d + 32`.
    pub quantized_bits: f64,
}

/// Quantization level whose message size matches a sparsifier keeping a
/// fraction `q` of `d` entries: solves `64qd = (log2(s) + 1)d + 32`.
pub fn match_bit_budget(q: f64, d: usize) -> Result<BitBudget> {
    if !(q > 0.0 && q <= 1.0) || d == 0 {
        return Err(Error::InvalidConfig(format!("need 0 < q <= 1 and d >= 1, got q={q}, d={d}")));
    }
    let df = d as f64;
    let exponent = (64.0 * q * df - 32.0) / df - 1.0;
    if exponent < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "q={q} too small for d={d}: no quantization level s >= 1 matches {:.2} bits",
            64.0 * q * df
        )));
    }
    let s = exponent.exp2().floor().max(1.0);
    Ok(BitBudget { s, sparse_bits: 64.0 * q * df, quantized_bits: quantized_message_bits(s, d) })
}

pub fn quantized_message_bits(s: f64, d: usize) -> f64 {
    (s.log2() + 1.0) * d as f64 + 32.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseBits {
    pub value_bits: u64,
    pub index_bits: u64,
}

/// 64 bits per kept value plus `ceil(log2 d)` bits per kept index.
pub fn count_bits_sparse(k: usize, d: usize) -> SparseBits {
    assert!(k >= 1 && k <= d, "need 1 <= k <= d");
    let index_width = if d <= 1 { 0 } else { usize::BITS - (d - 1).leading_zeros() } as u64;
    SparseBits { value_bits: 64 * k as u64, index_bits: index_width * k as u64 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::SeedableRng;

    fn owner() -> MaskOwner {
        MaskOwner { node: 0, kind: MessageKind::State, t: 0 }
    }

    #[test]
    fn full_budget_keeps_everything() {
        let mut r = StreamRng::seed_from_u64(1);
        let m = draw_mask(6, 6, owner(), &mut r).unwrap();
        assert_eq!(m.kept(), &[0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn invalid_budget_rejected() {
        let mut r = StreamRng::seed_from_u64(1);
        assert!(draw_mask(4, 0, owner(), &mut r).is_err());
        assert!(draw_mask(4, 5, owner(), &mut r).is_err());
    }

    #[test]
    fn masks_have_exactly_k_unique_indices() {
        let mut r = StreamRng::seed_from_u64(9);
        for _ in 0..200 {
            let m = draw_mask(17, 5, owner(), &mut r).unwrap();
            assert_eq!(m.k(), 5);
            assert!(m.kept().windows(2).all(|w| w[0] < w[1]));
            assert!(m.kept().iter().all(|&i| i < 17));
        }
    }

    #[test]
    fn seeded_mask_is_repeatable() {
        let a = draw_mask_seeded(5, 2, 1, owner()).unwrap();
        let b = draw_mask_seeded(5, 2, 1, owner()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn marginals_match_k_over_d() {
        let mut r = StreamRng::seed_from_u64(2024);
        let mut hits = [0usize; 4];
        let draws = 40_000;
        for _ in 0..draws {
            for &i in draw_mask(4, 1, owner(), &mut r).unwrap().kept() {
                hits[i] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.25).abs() < 0.01, "{hits:?}");
        }
    }

    #[test]
    fn apply_mask_selects_and_densifies() {
        let m = SparsityMask::from_indices(3, vec![0, 2], owner()).unwrap();
        let msg = apply_mask(&[1.0, 2.0, 3.0], &m);
        assert_eq!(msg.entries, vec![(0, 1.0), (2, 3.0)]);
        assert_eq!(msg.densify(), vec![1.0, 0.0, 3.0]);
        let zero = apply_mask(&[0.0; 3], &m);
        assert_eq!(zero.entries.len(), 2);
        assert!(zero.entries.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn quantizer_lattice_point_is_exact() {
        let cfg = QuantizerConfig::new(5.0, 0).unwrap();
        let mut r = StreamRng::seed_from_u64(3);
        for _ in 0..100 {
            let out = quantize(&[3.0, 4.0], &cfg, &mut r);
            assert!((out[0] - 3.0).abs() < 1e-12);
            assert!((out[1] - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quantizer_zero_vector() {
        let cfg = QuantizerConfig::new(3.0, 0).unwrap();
        let mut r = StreamRng::seed_from_u64(3);
        assert_eq!(quantize(&[0.0; 4], &cfg, &mut r), vec![0.0; 4]);
    }

    #[test]
    fn quantizer_output_on_lattice() {
        let cfg = QuantizerConfig::new(4.0, 0).unwrap();
        let mut r = StreamRng::seed_from_u64(8);
        let v = [0.3, -1.7, 2.2, 0.05];
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..500 {
            for (o, x) in quantize(&v, &cfg, &mut r).iter().zip(v) {
                let lvl = o.abs() / norm * 4.0;
                assert!((lvl - lvl.round()).abs() < 1e-9 && lvl.round() <= 4.0);
                assert!(*o == 0.0 || o.signum() == x.signum());
            }
        }
    }

    #[test]
    fn quantizer_rejects_bad_level() {
        assert!(QuantizerConfig::new(0.0, 0).is_err());
        assert!(QuantizerConfig::new(2.5, 0).is_err());
    }

    #[test]
    fn bit_matching_levels() {
        assert_eq!(match_bit_budget(0.09, 128).unwrap().s, 22.0);
        assert_eq!(match_bit_budget(0.07, 64).unwrap().s, 7.0);
        assert_eq!(match_bit_budget(1.0, 32).unwrap().s, 2f64.powi(62));
        assert!(match_bit_budget(0.01, 32).is_err());
        assert!(match_bit_budget(0.0, 32).is_err());
    }

    #[test]
    fn sparse_bit_counts() {
        assert_eq!(count_bits_sparse(128, 128).value_bits, 8192);
        assert_eq!(count_bits_sparse(12, 128), SparseBits { value_bits: 768, index_bits: 84 });
        assert_eq!(count_bits_sparse(1, 2), SparseBits { value_bits: 64, index_bits: 1 });
    }
}
