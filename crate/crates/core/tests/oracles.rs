//! Independent oracles for the eigen solver and the connectivity check.

use nalgebra::{Complex, DMatrix};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsepush::eigen::sorted_moduli;
use sparsepush::mixing::{coordinate_mixing_sequence, window_product, MaskConvention};
use sparsepush::topology::{check_joint_connectivity, generate_er_schedule, DirectedGraphSnapshot, TopologySchedule};

/// Monic characteristic polynomial coefficients `c[0..=n]` (`c[n] = 1`) by
/// Faddeev-LeVerrier.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c[n - k + 1];
        c[n - k] = -(a * &m).trace() / k as f64;
    }
    c
}

/// All roots of a monic polynomial by Durand-Kerner iteration.
fn durand_kerner(c: &[f64]) -> Vec<Complex<f64>> {
    let n = c.len() - 1;
    let eval = |z: Complex<f64>| c.iter().rev().fold(Complex::new(0.0, 0.0), |acc, &ci| acc * z + ci);
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|i| seed.powu(i as u32)).collect();
    for _ in 0..5000 {
        let prev = roots.clone();
        for i in 0..n {
            let denom = (0..n).filter(|&j| j != i).fold(Complex::new(1.0, 0.0), |acc, j| acc * (roots[i] - roots[j]));
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
        if roots.iter().zip(&prev).all(|(a, b)| (a - b).norm() < 1e-15) {
            break;
        }
    }
    roots
}

fn oracle_moduli(a: &DMatrix<f64>) -> Vec<f64> {
    let mut m: Vec<f64> = durand_kerner(&char_poly(a)).iter().map(|z| z.norm()).collect();
    m.sort_by(|a, b| b.total_cmp(a));
    m
}

fn assert_moduli_match(a: &DMatrix<f64>, tol: f64) {
    let got = sorted_moduli(a).unwrap();
    let want = oracle_moduli(a);
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() < tol, "moduli {got:?} vs oracle {want:?}");
    }
}

#[test]
fn eigen_matches_characteristic_polynomial_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        assert_moduli_match(&a, 1e-7);
    }
}

#[test]
fn eigen_matches_characteristic_polynomial_on_perturbed_products() {
    // n = 2 gives 4 x 4 window products; the perturbation splits the double
    // unit eigenvalue, which keeps the polynomial roots simple.
    for seed in 0..40u64 {
        let window = 1 + (seed % 3) as usize;
        let sched = generate_er_schedule(2, 0.9, window, window, seed).unwrap();
        let mbars = coordinate_mixing_sequence(&sched, 1, 1, seed, MaskConvention::SenderMask, 0, window).unwrap();
        assert_moduli_match(&window_product(&mbars, 0.05), 1e-6);
    }
}

fn petgraph_connected(g: &DirectedGraphSnapshot) -> bool {
    let mut pg = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..g.n()).map(|_| pg.add_node(())).collect();
    for (s, d) in g.edges() {
        pg.add_edge(nodes[s], nodes[d], ());
    }
    kosaraju_scc(&pg).len() == 1
}

fn random_snapshot(rng: &mut ChaCha8Rng, n: usize, t: usize, p: f64) -> DirectedGraphSnapshot {
    let edges: Vec<(usize, usize)> =
        (0..n).flat_map(|s| (0..n).map(move |d| (s, d))).filter(|&(s, d)| s != d).filter(|_| rng.random_bool(p)).collect();
    DirectedGraphSnapshot::from_edges(n, t, &edges)
}

#[test]
fn strong_connectivity_matches_petgraph() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen = [0usize; 2];
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let p = rng.random_range(0.05..0.6);
        let g = random_snapshot(&mut rng, n, 0, p);
        let want = petgraph_connected(&g);
        assert_eq!(g.is_strongly_connected(), want, "edges {:?}", g.edges());
        seen[usize::from(want)] += 1;
    }
    assert!(seen[0] > 50 && seen[1] > 50, "oracle saw too few of one class: {seen:?}");
}

#[test]
fn joint_connectivity_matches_petgraph_on_unions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let n = rng.random_range(2..=7);
        let window = rng.random_range(1..=4);
        let snaps: Vec<_> = (0..3 * window).map(|t| random_snapshot(&mut rng, n, t, 0.2)).collect();
        let want = snaps.chunks(window).all(|block| {
            let edges: Vec<(usize, usize)> = block.iter().flat_map(|g| g.edges()).collect();
            petgraph_connected(&DirectedGraphSnapshot::from_edges(n, 0, &edges))
        });
        let sched = TopologySchedule::explicit(n, window, snaps);
        assert_eq!(check_joint_connectivity(&sched, window), want);
    }
}

#[test]
fn generated_schedules_are_jointly_connected() {
    for seed in 0..30u64 {
        let window = 1 + (seed % 3) as usize;
        let sched = generate_er_schedule(6, 0.5, 12 * window, window, seed).unwrap();
        for block in sched.snapshots.chunks(window) {
            let edges: Vec<(usize, usize)> = block.iter().flat_map(|g| g.edges()).collect();
            assert!(petgraph_connected(&DirectedGraphSnapshot::from_edges(6, 0, &edges)));
        }
    }
}
