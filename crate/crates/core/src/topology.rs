//! Time-varying directed topologies.
//!
//! A [`TopologySchedule`] is a list of [`DirectedGraphSnapshot`]s, one per
//! time step. Every node always hears itself, so self-loops are part of both
//! neighbor sets and are never removed.

use std::fmt::Write as _;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Retry budget per window when searching for a connected realization.
pub const CONNECTIVITY_RETRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraphSnapshot {
    n: usize,
    t: usize,
    /// `adj[src * n + dst]`: src can send to dst. Diagonal always set.
    adj: Vec<bool>,
    in_neighbors: Vec<Vec<usize>>,
    out_neighbors: Vec<Vec<usize>>,
}

impl DirectedGraphSnapshot {
    /// Graph with only self-loops.
    pub fn empty(n: usize, t: usize) -> Self {
        let mut adj = vec![false; n * n];
        for i in 0..n {
            adj[i * n + i] = true;
        }
        Self::from_adjacency(n, t, adj)
    }

    pub fn complete(n: usize, t: usize) -> Self {
        Self::from_adjacency(n, t, vec![true; n * n])
    }

    /// Build from directed `(src, dst)` pairs; self-loops are added.
    pub fn from_edges(n: usize, t: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(n, t);
        for &(s, d) in edges {
            assert!(s < n && d < n, "edge ({s}, {d}) out of range for n={n}");
            g.adj[s * n + d] = true;
        }
        g.rebuild();
        g
    }

    fn from_adjacency(n: usize, t: usize, mut adj: Vec<bool>) -> Self {
        for i in 0..n {
            adj[i * n + i] = true;
        }
        let mut g = Self { n, t, adj, in_neighbors: Vec::new(), out_neighbors: Vec::new() };
        g.rebuild();
        g
    }

    fn rebuild(&mut self) {
        let n = self.n;
        self.in_neighbors = (0..n).map(|i| (0..n).filter(|&j| self.adj[j * n + i]).collect()).collect();
        self.out_neighbors = (0..n).map(|j| (0..n).filter(|&i| self.adj[j * n + i]).collect()).collect();
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Nodes that can send to `i`, including `i`.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_neighbors[i]
    }

    /// Nodes that can receive from `j`, including `j`.
    pub fn out_neighbors(&self, j: usize) -> &[usize] {
        &self.out_neighbors[j]
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.adj[src * self.n + dst]
    }

    /// Non-self edges as `(src, dst)`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n)
            .flat_map(|s| (0..n).map(move |d| (s, d)))
            .filter(|&(s, d)| s != d && self.adj[s * n + d])
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    pub fn remove_edge(&mut self, src: usize, dst: usize) {
        if src != dst {
            self.adj[src * self.n + dst] = false;
            self.rebuild();
        }
    }

    /// Drop every non-self edge into and out of `node`.
    pub fn isolate(&mut self, node: usize) {
        let n = self.n;
        for other in 0..n {
            if other != node {
                self.adj[node * n + other] = false;
                self.adj[other * n + node] = false;
            }
        }
        self.rebuild();
    }

    fn reaches_all(&self, forward: bool) -> bool {
        let n = self.n;
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            let next = if forward { &self.out_neighbors[u] } else { &self.in_neighbors[u] };
            for &v in next {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// One strongly connected component: node 0 reaches everyone and everyone
    /// reaches node 0.
    pub fn is_strongly_connected(&self) -> bool {
        self.reaches_all(true) && self.reaches_all(false)
    }

    pub fn union(snapshots: &[DirectedGraphSnapshot]) -> DirectedGraphSnapshot {
        let first = snapshots.first().expect("union of zero snapshots");
        let n = first.n;
        let mut adj = vec![false; n * n];
        for g in snapshots {
            assert_eq!(g.n, n, "union over snapshots of different sizes");
            for (a, &b) in adj.iter_mut().zip(&g.adj) {
                *a |= b;
            }
        }
        Self::from_adjacency(n, first.t, adj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Explicit,
    ErdosRenyi,
    JointlyConnectedErdosRenyi,
}

impl GeneratorKind {
    pub fn tag(self) -> &'static str {
        match self {
            GeneratorKind::Explicit => "explicit",
            GeneratorKind::ErdosRenyi => "erdos-renyi",
            GeneratorKind::JointlyConnectedErdosRenyi => "jointly-connected-erdos-renyi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySchedule {
    pub n: usize,
    pub snapshots: Vec<DirectedGraphSnapshot>,
    pub window: usize,
    pub seed: u64,
    pub generator: GeneratorKind,
}

impl TopologySchedule {
    pub fn explicit(n: usize, window: usize, snapshots: Vec<DirectedGraphSnapshot>) -> Self {
        Self { n, snapshots, window, seed: 0, generator: GeneratorKind::Explicit }
    }

    /// The same graph repeated for `horizon` steps.
    pub fn repeated(graph: &DirectedGraphSnapshot, horizon: usize, window: usize) -> Self {
        let snapshots = (0..horizon)
            .map(|t| {
                let mut g = graph.clone();
                g.t = t;
                g
            })
            .collect();
        Self::explicit(graph.n, window, snapshots)
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Snapshot used at step `t`; schedules shorter than the run horizon wrap.
    pub fn at(&self, t: usize) -> &DirectedGraphSnapshot {
        &self.snapshots[t % self.snapshots.len()]
    }

    /// Line-oriented text: header `n=<n> B=<B> T=<T>`, then one `t i j` line
    /// per non-self edge i -> j. Self-loops are implicit.
    pub fn to_text(&self) -> String {
        let mut out = format!("n={} B={} T={}\n", self.n, self.window, self.snapshots.len());
        for (t, g) in self.snapshots.iter().enumerate() {
            for (s, d) in g.edges() {
                let _ = writeln!(out, "{t} {s} {d}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines
            .next()
            .ok_or(Error::ScheduleParse { line: 1, msg: "missing header".into() })?;
        let (mut n, mut window, mut horizon) = (None, None, None);
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::ScheduleParse { line: hline, msg: format!("bad header token `{tok}`") })?;
            let v: usize = v
                .parse()
                .map_err(|_| Error::ScheduleParse { line: hline, msg: format!("bad value in `{tok}`") })?;
            match k {
                "n" => n = Some(v),
                "B" => window = Some(v),
                "T" => horizon = Some(v),
                _ => return Err(Error::ScheduleParse { line: hline, msg: format!("unknown header key `{k}`") }),
            }
        }
        let n = n.ok_or(Error::ScheduleParse { line: hline, msg: "header lacks n=".into() })?;
        let window = window.ok_or(Error::ScheduleParse { line: hline, msg: "header lacks B=".into() })?;
        if n == 0 || window == 0 {
            return Err(Error::ScheduleParse { line: hline, msg: "n and B must be positive".into() });
        }
        let mut edges: Vec<Vec<(usize, usize)>> = Vec::new();
        for (line, l) in lines {
            let nums: Vec<usize> = l
                .split_whitespace()
                .map(|x| x.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::ScheduleParse { line, msg: format!("expected `t i j`, got `{l}`") })?;
            let [t, s, d] = nums[..] else {
                return Err(Error::ScheduleParse { line, msg: format!("expected 3 fields, got {}", nums.len()) });
            };
            if s >= n || d >= n {
                return Err(Error::ScheduleParse { line, msg: format!("node index out of range for n={n}") });
            }
            if let Some(h) = horizon {
                if t >= h {
                    return Err(Error::ScheduleParse { line, msg: format!("t={t} beyond T={h}") });
                }
            }
            if edges.len() <= t {
                edges.resize(t + 1, Vec::new());
            }
            edges[t].push((s, d));
        }
        let horizon = horizon.unwrap_or(edges.len()).max(1);
        edges.resize(horizon, Vec::new());
        let snapshots = edges
            .iter()
            .enumerate()
            .map(|(t, e)| DirectedGraphSnapshot::from_edges(n, t, e))
            .collect();
        Ok(Self::explicit(n, window, snapshots))
    }
}

/// Sample one directed ER graph: each ordered pair independently with prob. `p`.
fn sample_er<R: Rng>(n: usize, p: f64, t: usize, rng: &mut R) -> DirectedGraphSnapshot {
    let mut adj = vec![false; n * n];
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.random_bool(p) {
                adj[s * n + d] = true;
            }
        }
    }
    DirectedGraphSnapshot::from_adjacency(n, t, adj)
}

/// Strongly connected ER sample with up to two unidirectional edges dropped
/// (each drop must keep strong connectivity).
fn sample_connected_er<R: Rng>(n: usize, p: f64, t: usize, rng: &mut R) -> Result<DirectedGraphSnapshot> {
    for _ in 0..CONNECTIVITY_RETRIES {
        let mut g = sample_er(n, p, t, rng);
        if !g.is_strongly_connected() {
            continue;
        }
        let mut candidates = g.edges();
        candidates.shuffle(rng);
        let mut dropped = 0;
        for (s, d) in candidates {
            if dropped == 2 {
                break;
            }
            g.remove_edge(s, d);
            if g.is_strongly_connected() {
                dropped += 1;
            } else {
                g.adj[s * n + d] = true;
                g.rebuild();
            }
        }
        return Ok(g);
    }
    Err(Error::ConnectivityRetriesExhausted { n, p, attempts: CONNECTIVITY_RETRIES })
}

/// Nodes cut off per step in the jointly-connected construction.
pub fn isolated_per_step(n: usize, window: usize) -> usize {
    if window <= 1 || n < 3 {
        0
    } else {
        (n / (window + 1)).max(1)
    }
}

/// Seeded ER schedule of `horizon` snapshots.
///
/// With `window == 1` every snapshot is strongly connected. With
/// `window > 1` each step additionally cuts all non-self edges of
/// [`isolated_per_step`] random nodes, and whole windows are resampled until
/// their union is strongly connected.
pub fn generate_er_schedule(n: usize, p: f64, horizon: usize, window: usize, seed: u64) -> Result<TopologySchedule> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need n >= 2, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!("edge probability must lie in (0, 1], got {p}")));
    }
    if window == 0 {
        return Err(Error::InvalidConfig("window B must be >= 1".into()));
    }
    let windows = horizon.div_ceil(window);
    let cut = isolated_per_step(n, window);
    let mut snapshots = Vec::with_capacity(windows * window);
    for k in 0..windows {
        let mut rng = rng::stream(seed, Domain::Topology, &[k as u64]);
        let mut found = None;
        for _ in 0..CONNECTIVITY_RETRIES {
            let mut block = Vec::with_capacity(window);
            for s in 0..window {
                let mut g = sample_connected_er(n, p, k * window + s, &mut rng)?;
                if cut > 0 {
                    let mut nodes: Vec<usize> = (0..n).collect();
                    nodes.shuffle(&mut rng);
                    for &v in &nodes[..cut] {
                        g.isolate(v);
                    }
                }
                block.push(g);
            }
            if window == 1 || DirectedGraphSnapshot::union(&block).is_strongly_connected() {
                found = Some(block);
                break;
            }
        }
        let block = found.ok_or(Error::ConnectivityRetriesExhausted { n, p, attempts: CONNECTIVITY_RETRIES })?;
        snapshots.extend(block);
    }
    snapshots.truncate(horizon);
    Ok(TopologySchedule { n, snapshots, window, seed, generator: GeneratorKind::JointlyConnectedErdosRenyi })
}

/// Unconstrained directed ER snapshots (no connectivity enforcement).
pub fn generate_plain_er_schedule(n: usize, p: f64, horizon: usize, seed: u64) -> Result<TopologySchedule> {
    if !(p >= 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!("edge probability must lie in [0, 1], got {p}")));
    }
    let snapshots = (0..horizon)
        .map(|t| sample_er(n, p, t, &mut rng::stream(seed, Domain::Topology, &[t as u64, u64::MAX])))
        .collect();
    Ok(TopologySchedule { n, snapshots, window: 1, seed, generator: GeneratorKind::ErdosRenyi })
}

/// True iff the union over every full window `[kB, (k+1)B)` is strongly
/// connected. A trailing partial window is ignored.
pub fn check_joint_connectivity(schedule: &TopologySchedule, window: usize) -> bool {
    assert!(window >= 1, "window must be positive");
    let full = schedule.len() / window;
    if schedule.len() % window != 0 {
        warn!(
            "schedule length {} is not a multiple of B={window}; ignoring trailing {} snapshot(s)",
            schedule.len(),
            schedule.len() % window
        );
    }
    if full == 0 {
        return false;
    }
    schedule
        .snapshots
        .chunks_exact(window)
        .all(|block| DirectedGraphSnapshot::union(block).is_strongly_connected())
}

/// In/out connectivity weights for one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityWeights {
    pub t: usize,
    /// Row-stochastic.
    pub w_in: DMatrix<f64>,
    /// Column-stochastic.
    pub w_out: DMatrix<f64>,
}

/// Uniform policy: `w_in[i][j] = 1/|N_in(i)|`, `w_out[i][j] = 1/|N_out(j)|`.
pub fn build_weights(snapshot: &DirectedGraphSnapshot) -> ConnectivityWeights {
    let n = snapshot.n();
    let mut w_in = DMatrix::zeros(n, n);
    let mut w_out = DMatrix::zeros(n, n);
    for i in 0..n {
        let nb = snapshot.in_neighbors(i);
        let w = 1.0 / nb.len() as f64;
        for &j in nb {
            w_in[(i, j)] = w;
        }
    }
    for j in 0..n {
        let nb = snapshot.out_neighbors(j);
        let w = 1.0 / nb.len() as f64;
        for &i in nb {
            w_out[(i, j)] = w;
        }
    }
    ConnectivityWeights { t: snapshot.t(), w_in, w_out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring3() -> DirectedGraphSnapshot {
        // 1 -> 2 -> 3 -> 1, zero-based
        DirectedGraphSnapshot::from_edges(3, 0, &[(0, 1), (1, 2), (2, 0)])
    }

    #[test]
    fn neighbor_sets_are_dual_and_contain_self() {
        let g = ring3();
        for i in 0..3 {
            assert!(g.in_neighbors(i).contains(&i));
            assert!(g.out_neighbors(i).contains(&i));
            for &j in g.in_neighbors(i) {
                assert!(g.out_neighbors(j).contains(&i));
            }
        }
    }

    #[test]
    fn complete_weights_are_uniform() {
        let w = build_weights(&DirectedGraphSnapshot::complete(4, 0));
        for v in w.w_in.iter().chain(w.w_out.iter()) {
            assert_eq!(*v, 0.25);
        }
    }

    #[test]
    fn ring_in_weights_row() {
        let w = build_weights(&ring3());
        // node 2 (one-based) hears itself and node 1
        assert_eq!(w.w_in.row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn isolated_node_weights_are_unit_vectors() {
        let g = DirectedGraphSnapshot::from_edges(3, 0, &[(0, 1), (1, 0)]);
        let w = build_weights(&g);
        assert_eq!(w.w_in.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        assert_eq!(w.w_out.column(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn weights_are_stochastic() {
        let s = generate_er_schedule(7, 0.5, 5, 1, 3).unwrap();
        for g in &s.snapshots {
            let w = build_weights(g);
            for i in 0..7 {
                assert!((w.w_in.row(i).sum() - 1.0).abs() < 1e-12);
                assert!((w.w_out.column(i).sum() - 1.0).abs() < 1e-12);
                for j in 0..7 {
                    assert_eq!(w.w_in[(i, j)] > 0.0, g.in_neighbors(i).contains(&j));
                    assert_eq!(w.w_out[(i, j)] > 0.0, g.out_neighbors(j).contains(&i));
                }
            }
        }
    }

    #[test]
    fn p_one_two_nodes_is_complete() {
        let s = generate_er_schedule(2, 1.0, 4, 1, 0).unwrap();
        for g in &s.snapshots {
            assert_eq!(g, &DirectedGraphSnapshot::complete(2, g.t()));
        }
    }

    #[test]
    fn joint_connectivity_small_cases() {
        let single = TopologySchedule::explicit(3, 1, vec![DirectedGraphSnapshot::complete(3, 0)]);
        assert!(check_joint_connectivity(&single, 1));

        let empty = TopologySchedule::explicit(3, 2, vec![DirectedGraphSnapshot::empty(3, 0), DirectedGraphSnapshot::empty(3, 1)]);
        assert!(!check_joint_connectivity(&empty, 2));

        let a = DirectedGraphSnapshot::from_edges(3, 0, &[(0, 1), (1, 2)]);
        let b = DirectedGraphSnapshot::from_edges(3, 1, &[(2, 0)]);
        let s = TopologySchedule::explicit(3, 2, vec![a, b]);
        assert!(check_joint_connectivity(&s, 2));
        assert!(!check_joint_connectivity(&s, 1));
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_er_schedule(8, 0.7, 9, 3, 42).unwrap();
        let b = generate_er_schedule(8, 0.7, 9, 3, 42).unwrap();
        let c = generate_er_schedule(8, 0.7, 9, 3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_er_schedule(1, 0.5, 3, 1, 0).is_err());
        assert!(generate_er_schedule(4, 0.0, 3, 1, 0).is_err());
        assert!(generate_er_schedule(4, 1.5, 3, 1, 0).is_err());
        assert!(generate_er_schedule(4, 0.5, 3, 0, 0).is_err());
    }

    #[test]
    fn tiny_p_exhausts_retries() {
        let err = generate_er_schedule(30, 0.001, 1, 1, 0).unwrap_err();
        assert!(matches!(err, Error::ConnectivityRetriesExhausted { .. }));
    }

    #[test]
    fn text_round_trip() {
        let s = generate_er_schedule(5, 0.6, 6, 3, 11).unwrap();
        let back = TopologySchedule::from_text(&s.to_text()).unwrap();
        assert_eq!(back.snapshots, s.snapshots);
        assert_eq!(back.window, 3);
    }

    #[test]
    fn text_parse_errors_carry_line() {
        let err = TopologySchedule::from_text("n=3 B=1\n0 1 2\n0 1\n").unwrap_err();
        assert!(matches!(err, Error::ScheduleParse { line: 3, .. }));
        assert!(TopologySchedule::from_text("n=3 B=1\n0 1 7\n").is_err());
        assert!(TopologySchedule::from_text("B=1\n").is_err());
    }
}
