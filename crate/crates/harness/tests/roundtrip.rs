//! Persistence round trips: configs, step series and optimization traces.

use std::path::Path;

use harness::config::parse_config;
use harness::experiment::{consensus_run, optimize_run};
use harness::io::{read_metrics, read_opt_trace, write_metrics, write_opt_trace};
use proptest::prelude::*;
use sparsepush::optimize::verify_theorem3;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_config_text_is_a_fixed_point(
        n in 2usize..50,
        d in 1usize..64,
        kf in 0.0f64..1.0,
        window in 1usize..5,
        eps in 1e-4f64..0.99,
        horizon in 1usize..10_000,
        seed in any::<u64>(),
        alpha in 1e-3f64..1.0,
    ) {
        let k = 1 + ((d - 1) as f64 * kf) as usize;
        let text = format!(
            "experiment = linreg\nn = {n}\nd = {d}\nk = {k}\nB = {window}\nepsilon = {eps}\nT = {horizon}\nseed = {seed}\nalpha_scale = {alpha}\n"
        );
        let cfg = parse_config(&text, Path::new("p.cfg")).unwrap();
        let canonical = cfg.to_text();
        let again = parse_config(&canonical, Path::new("p.cfg")).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(canonical, again.to_text());
        prop_assert_eq!(cfg.hash(), again.hash());
    }
}

#[test]
fn hash_ignores_output_directory_only() {
    let base = "n = 4\nd = 2\nk = 1\nT = 10\n";
    let a = parse_config(&format!("{base}out = one\n"), Path::new("c.cfg")).unwrap();
    let b = parse_config(&format!("{base}out = two\n"), Path::new("c.cfg")).unwrap();
    let c = parse_config(&format!("{base}seed = 9\n"), Path::new("c.cfg")).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn consensus_metrics_survive_disk() {
    let cfg = parse_config("n = 5\nd = 3\nk = 2\nB = 2\nT = 40\nseed = 6\ntrack_spectrum = true\n", Path::new("c.cfg")).unwrap();
    let (m, side) = consensus_run(&cfg, 5, cfg.epsilon).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("run.csv");
    write_metrics(&m, &p, &side).unwrap();
    let back = read_metrics(&p).unwrap();
    assert_eq!(back.steps.len(), m.steps.len());
    assert!(back.steps.iter().zip(&m.steps).all(|(a, b)| a.same_bits(b)));
    assert_eq!(back.windows, m.windows);
    assert_eq!(back.disagreement, m.disagreement);
}

#[test]
fn optimization_trace_survives_disk() {
    let cfg = parse_config(
        "experiment = linreg\nn = 4\nd = 3\nk = 2\nB = 1\nT = 30\nseed = 2\nsamples_per_node = 6\ntrack_spectrum = true\n",
        Path::new("c.cfg"),
    )
    .unwrap();
    let (trace, side) = optimize_run(&cfg, 4, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("opt.csv");
    write_opt_trace(&trace, &p, &side).unwrap();
    let back = read_opt_trace(&p).unwrap();
    assert_eq!(back.windows, trace.windows);
    assert_eq!(back.z0, trace.z0);
    assert_eq!(back.x_star, trace.x_star);
    assert_eq!(back.f_star.map(f64::to_bits), trace.f_star.map(f64::to_bits));
    assert_eq!(back.d_measured.to_bits(), trace.d_measured.to_bits());
    let (a, b) = (verify_theorem3(&trace, None).unwrap(), verify_theorem3(&back, None).unwrap());
    assert_eq!(a.rows, b.rows);
}
