//! Structural invariants of the engines under random configurations.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sparsepush::baselines::{qgradpush_step, PushSumState};
use sparsepush::compression::{Quantizer, QuantizerConfig};
use sparsepush::consensus::{consensus_step, run_consensus, step_inputs, ConsensusConfig, NetworkState};
use sparsepush::mixing::{build_step_mixing, MaskConvention, PerturbationSpec, StepMasks};
use sparsepush::optimize::{run_optimize, ObjectiveOracle, OptRunConfig, StepSchedule};
use sparsepush::topology::{build_weights, generate_er_schedule};

fn x0(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |i, m| (((i * 7 + m * 13) as u64 ^ seed) % 17) as f64 / 4.0 - 2.0)
}

fn consensus(n: usize, k: usize, window: usize, horizon: usize, seed: u64) -> ConsensusConfig {
    ConsensusConfig {
        schedule: generate_er_schedule(n, 0.7, horizon.max(window), window, seed).unwrap(),
        k,
        perturbation: PerturbationSpec::new(0.05, window).unwrap(),
        horizon,
        seed,
        mask_convention: MaskConvention::SenderMask,
        track_spectrum: false,
    }
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, usize, u64)> {
    (2usize..8, 1usize..6, 1usize..4, any::<u64>())
        .prop_flat_map(|(n, d, window, seed)| (Just(n), Just(d), 1..=d, Just(window), Just(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_matrices_are_stochastic((n, d, k, _w, seed) in dims(), t in 0usize..5) {
        let sched = generate_er_schedule(n, 0.6, t + 1, 1, seed).unwrap();
        let masks = StepMasks::draw(seed, n, d, k, t).unwrap();
        for set in build_step_mixing(&build_weights(sched.at(t)), &masks, d, MaskConvention::SenderMask) {
            let mbar = set.mbar();
            for i in 0..n {
                prop_assert!((set.a.row(i).sum() - 1.0).abs() < 1e-12);
                prop_assert!((set.b.column(i).sum() - 1.0).abs() < 1e-12);
            }
            for j in 0..2 * n {
                prop_assert!((mbar.column(j).sum() - 1.0).abs() < 1e-12);
            }
            prop_assert!(set.a.iter().chain(set.b.iter()).all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn mass_is_conserved((n, d, k, w, seed) in dims()) {
        let cfg = consensus(n, k, w, 4 * w, seed);
        let mut state = NetworkState::new(&x0(n, d, seed));
        let m0 = state.mass();
        for t in 0..cfg.horizon {
            let (masks, mixing) = step_inputs(&cfg.schedule, d, k, seed, cfg.mask_convention, t).unwrap();
            state = consensus_step(&state, &mixing, &cfg.perturbation, &masks);
            prop_assert!((state.mass() - m0).abs() <= 1e-9 * m0.abs().max(1.0));
        }
    }

    #[test]
    fn consensus_point_is_fixed((n, d, k, w, seed) in dims()) {
        let row = DVector::from_fn(d, |m, _| m as f64 - 1.5);
        let x = DMatrix::from_fn(n, d, |_, m| row[m]);
        let cfg = consensus(n, k, w, 3 * w, seed);
        let mut state = NetworkState::new(&x);
        for t in 0..cfg.horizon {
            let (masks, mixing) = step_inputs(&cfg.schedule, d, k, seed, cfg.mask_convention, t).unwrap();
            state = consensus_step(&state, &mixing, &cfg.perturbation, &masks);
        }
        prop_assert!((state.x() - &x).amax() < 1e-12);
        prop_assert!(state.y().amax() < 1e-12);
    }

    #[test]
    fn full_budget_is_unsparsified((n, d, _k, _w, seed) in dims(), t in 0usize..4) {
        let sched = generate_er_schedule(n, 0.6, t + 1, 1, seed).unwrap();
        let w = build_weights(sched.at(t));
        let drawn = build_step_mixing(&w, &StepMasks::draw(seed, n, d, d, t).unwrap(), d, MaskConvention::SenderMask);
        let full = build_step_mixing(&w, &StepMasks::full(n, d, t), d, MaskConvention::SenderMask);
        for (a, b) in drawn.iter().zip(&full) {
            prop_assert!(a.a.iter().zip(b.a.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert!(a.b.iter().zip(b.b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert!(a.a.iter().zip(w.w_in.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn zero_objective_reduces_to_consensus((n, d, k, w, seed) in dims()) {
        let cfg = consensus(n, k, w, 5 * w, seed);
        let x = x0(n, d, seed);
        let plain = run_consensus(&cfg, &x).unwrap();
        let opt = run_optimize(
            &OptRunConfig {
                consensus: cfg,
                oracle: ObjectiveOracle::Zero { n, d },
                steps: StepSchedule::Harmonic { a: 0.5 },
                x_star: None,
                f_star: None,
            },
            &x,
        )
        .unwrap();
        prop_assert_eq!(plain.steps.len(), opt.metrics.steps.len());
        for (a, b) in plain.steps.iter().zip(&opt.metrics.steps) {
            prop_assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            prop_assert_eq!(a.max_surplus_norm.to_bits(), b.max_surplus_norm.to_bits());
        }
    }

    #[test]
    fn window_mean_follows_averaged_gradient((n, d, k, w, seed) in dims()) {
        let centers: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(d, |m, _| ((i + 2 * m) % 5) as f64 - 2.0)).collect();
        let trace = run_optimize(
            &OptRunConfig {
                consensus: consensus(n, k, w, 6 * w, seed),
                oracle: ObjectiveOracle::Quadratic { centers },
                steps: StepSchedule::Harmonic { a: 0.2 },
                x_star: None,
                f_star: None,
            },
            &x0(n, d, seed),
        )
        .unwrap();
        for pair in trace.windows.windows(2) {
            let predicted = &pair[0].zbar - &pair[0].grad_sum * (pair[0].alpha / n as f64);
            prop_assert!((&pair[1].zbar - predicted).amax() < 1e-10);
        }
    }

    #[test]
    fn push_sum_weights_sum_to_n((n, d, _k, _w, seed) in dims(), s in 2.0f64..64.0) {
        let sched = generate_er_schedule(n, 0.6, 10, 1, seed).unwrap();
        let quantizer = Quantizer::Stochastic(QuantizerConfig::new(s.floor(), seed).unwrap());
        let oracle = ObjectiveOracle::Zero { n, d };
        let mut state = PushSumState::new(&x0(n, d, seed));
        for t in 0..10 {
            state = qgradpush_step(&state, &build_weights(sched.at(t)).w_out, &quantizer, &oracle, 0.0).unwrap();
            prop_assert!((state.y_weights.sum() - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn runs_are_deterministic((n, d, k, w, seed) in dims()) {
        let cfg = consensus(n, k, w, 4 * w, seed);
        let x = x0(n, d, seed);
        let a = run_consensus(&cfg, &x).unwrap();
        let b = run_consensus(&cfg, &x).unwrap();
        prop_assert!(a.steps.iter().zip(&b.steps).all(|(p, q)| p.same_bits(q)));
    }
}
