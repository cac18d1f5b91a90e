//! Dataset ingestion and synthetic generators against independent references.

use std::fs;
use std::path::Path;

use harness::data::{ingest_idx, synth_classification, synth_linreg, RowNorm};
use harness::HarnessError;
use nalgebra::{DMatrix, SymmetricEigen};
use sparsepush::optimize::ObjectiveOracle;

fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend_from_slice(&d.to_be_bytes());
    }
    b.extend_from_slice(payload);
    b
}

fn image(item: usize, r: usize, c: usize) -> u8 {
    ((r * 9 + c * 5 + item * 71) % 256) as u8
}

fn write_pair(dir: &Path, items: usize, labels: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let pixels: Vec<u8> = (0..items).flat_map(|i| (0..28).flat_map(move |r| (0..28).map(move |c| image(i, r, c)))).collect();
    let img = dir.join("images.idx");
    let lab = dir.join("labels.idx");
    fs::write(&img, idx_bytes(0x0803, &[items as u32, 28, 28], &pixels)).unwrap();
    fs::write(&lab, idx_bytes(0x0801, &[labels as u32], &(0..labels as u8).collect::<Vec<_>>())).unwrap();
    (img, lab)
}

/// Interpolation matrix of a half-pixel-centered linear resize of one axis.
fn resize_matrix(out: usize, inp: usize) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(out, inp);
    for o in 0..out {
        let x = ((o as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(inp - 1);
        r[(o, lo)] += 1.0 - (x - lo as f64);
        r[(o, hi)] += x - lo as f64;
    }
    r
}

#[test]
fn idx_images_match_separable_resize() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_pair(dir.path(), 2, 2);
    for side in [4usize, 9, 28] {
        let data = ingest_idx(&img, &lab, None, side * side).unwrap();
        assert_eq!(data.labels, vec![0, 1]);
        let r = resize_matrix(side, 28);
        for item in 0..2 {
            let x = DMatrix::from_fn(28, 28, |row, col| image(item, row, col) as f64 / 255.0);
            let want = &r * x * r.transpose();
            for (m, &got) in data.features.row(item).iter().enumerate() {
                assert!((got - want[(m / side, m % side)]).abs() < 1e-12, "side {side}, item {item}, entry {m}");
            }
        }
    }
}

#[test]
fn downsampling_by_seven_picks_pixel_centers() {
    // 28 -> 4 puts every output center exactly on input pixel 3 + 7j.
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_pair(dir.path(), 2, 2);
    let data = ingest_idx(&img, &lab, Some(1), 16).unwrap();
    assert_eq!(data.len(), 1);
    for m in 0..16 {
        let want = image(0, 3 + 7 * (m / 4), 3 + 7 * (m % 4)) as f64 / 255.0;
        assert_eq!(data.features[(0, m)], want);
    }
}

#[test]
fn idx_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = write_pair(dir.path(), 2, 3);
    assert!(matches!(ingest_idx(&img, &lab, None, 16), Err(HarnessError::Idx { .. })), "count mismatch");

    let empty = dir.path().join("empty.idx");
    fs::write(&empty, []).unwrap();
    assert!(matches!(ingest_idx(&empty, &lab, None, 16), Err(HarnessError::Idx { .. })), "zero-byte file");

    let truncated = dir.path().join("short.idx");
    fs::write(&truncated, idx_bytes(0x0803, &[2, 28, 28], &[0; 100])).unwrap();
    assert!(matches!(ingest_idx(&truncated, &lab, None, 16), Err(HarnessError::Idx { .. })), "truncated payload");

    assert!(matches!(ingest_idx(&lab, &img, None, 16), Err(HarnessError::Idx { .. })), "swapped magic");
    let (img, lab) = write_pair(dir.path(), 2, 2);
    assert!(matches!(ingest_idx(&img, &lab, None, 15), Err(HarnessError::Validation(_))), "non-square dimension");
}

#[test]
fn separable_blobs_are_learned_centrally() {
    let data = synth_classification(2, 200, 16, 3.0, 8).unwrap();
    let oracle = ObjectiveOracle::Logistic { nodes: data.partition(1), classes: 2, mu: 1e-3 };
    let x = oracle.logistic_reference(5_000, 0.5);
    let rate = oracle.correct_rate(&x).unwrap();
    assert!(rate > 0.95, "correct rate {rate}");
}

#[test]
fn noiseless_regression_recovers_generator() {
    let (nodes, x_star) = synth_linreg(4, 20, 8, 0.0, RowNorm::UnitL2, 5).unwrap();
    let oracle = ObjectiveOracle::LinearRegression { nodes };
    let x = oracle.minimizer().unwrap();
    assert!((x - &x_star).amax() < 1e-8);
    assert!(oracle.value(&x_star) < 1e-20);
}

fn hessian_spectrum(norm: RowNorm) -> (f64, f64) {
    let (nodes, _) = synth_linreg(10, 50, 32, 0.01, norm, 3).unwrap();
    let mut h = DMatrix::zeros(32, 32);
    for node in &nodes {
        h += node.features.transpose() * &node.features * (2.0 / 10.0);
    }
    let ev = SymmetricEigen::new(h).eigenvalues;
    (ev.min(), ev.max())
}

#[test]
fn unit_rows_keep_regression_well_conditioned() {
    let (lo, hi) = hessian_spectrum(RowNorm::UnitL2);
    assert!(lo > 1.0 && hi < 10.0, "unit-row Hessian spectrum [{lo}, {hi}]");
    let (_, hi_sum) = hessian_spectrum(RowNorm::SumToOne);
    assert!(hi_sum > 1e3, "signed-sum rows should be ill-conditioned, got {hi_sum}");
}

#[test]
fn partition_is_round_robin_and_balanced() {
    let data = synth_classification(3, 10, 4, 1.0, 1).unwrap();
    let parts = data.partition(4);
    assert_eq!(parts.iter().map(|p| p.labels.len()).collect::<Vec<_>>(), vec![8, 8, 7, 7]);
    assert_eq!(parts[1].labels[0], data.labels[1]);
    assert_eq!(parts[1].labels[1], data.labels[5]);
}
