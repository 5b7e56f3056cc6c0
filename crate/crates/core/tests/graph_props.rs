use flexgt::graph::{
    build_topology, gap_bound, make_operator, metropolis_weights, random_connected, spectral_gap_eigen,
    spectral_gap_power, stochastic_deviation, MixingMatrix, Protocol, TopologyKind,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_mixing(seed: u64, n: usize, edge_prob: f64) -> MixingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    metropolis_weights(&random_connected(n, edge_prob, &mut rng).unwrap()).unwrap()
}

fn ring20() -> MixingMatrix {
    metropolis_weights(&build_topology(TopologyKind::Ring, 20, None).unwrap()).unwrap()
}

/// Breadth-first reachability from node 0 over the raw adjacency lists.
fn reachable(t: &flexgt::graph::Topology) -> usize {
    let mut seen = vec![false; t.n()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in t.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().filter(|&&s| s).count()
}

#[test]
fn exponential_graph_is_symmetric_and_connected() {
    let t = build_topology(TopologyKind::Exponential, 20, Some(5)).unwrap();
    assert_eq!(reachable(&t), 20);
    for i in 0..20 {
        for &j in t.neighbors(i) {
            assert!(t.neighbors(j).contains(&i));
        }
        assert_eq!(t.degree(i), 8);
    }
}

#[test]
fn ring20_gap_matches_circulant_eigenvalues() {
    // W = (I + P + Pᵀ)/3 has eigenvalues (1 + 2cos(2πk/20))/3.
    let expected = (1..20)
        .map(|k| ((1.0 + 2.0 * (2.0 * std::f64::consts::PI * k as f64 / 20.0).cos()) / 3.0).powi(2))
        .fold(0.0, f64::max);
    let w = ring20();
    assert!(w.rho_w() > 0.0 && w.rho_w() < 1.0);
    assert!((w.rho_w() - expected).abs() < 1e-13);
}

#[test]
fn ring20_power_iteration_agrees_with_eigen() {
    let w = ring20();
    let a = spectral_gap_eigen(w.w()).unwrap();
    let b = spectral_gap_power(w.w(), 1e-12, 10_000).unwrap();
    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
}

#[test]
fn power_iteration_on_larger_random_graphs() {
    for seed in 0..5 {
        let w = random_mixing(seed, 80, 0.05);
        let a = spectral_gap_eigen(w.w()).unwrap();
        let b = spectral_gap_power(w.w(), 1e-12, 10_000).unwrap();
        assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
    }
}

#[test]
fn averaging_matrix_rho_is_zero() {
    let j = MixingMatrix::averaging(4).unwrap();
    assert!(j.rho_w().abs() < 1e-15);
    let i = MixingMatrix::from_matrix(DMatrix::identity(2, 2)).unwrap();
    assert!((i.rho_w() - 1.0).abs() < 1e-14);
}

/// Recorded violation of the accelerated-gossip envelope: on the Metropolis
/// ring with 20 nodes and four steps the exact effective gap exceeds
/// `2(1 − √(1 − √ρ_W))^{2α}`.
#[test]
fn accelerated_ring20_alpha4_exceeds_gap_bound() {
    let w = ring20();
    let op = make_operator(&w, Protocol::Accelerated, 4).unwrap();
    assert!((w.rho_w() - 0.935_806_672_658_945_2).abs() < 1e-12);
    assert!((op.rho_bar() - 0.460_712_662_622_037_1).abs() < 1e-9);
    assert!((op.bound() - 0.406_302_440_082_414_73).abs() < 1e-12);
    assert!(op.bound_margin() < -0.05);
}

/// The accelerated operator does still contract well below the direct one.
#[test]
fn accelerated_beats_direct_on_ring() {
    let w = ring20();
    for alpha in [8, 12, 16] {
        let acc = make_operator(&w, Protocol::Accelerated, alpha).unwrap();
        let dir = make_operator(&w, Protocol::Direct, alpha).unwrap();
        assert!(acc.rho_bar() < dir.rho_bar(), "alpha {alpha}");
    }
}

fn topology_strategy() -> impl Strategy<Value = (u64, usize, f64)> {
    (any::<u64>(), 4usize..=64, 0.0f64..0.3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn metropolis_is_doubly_stochastic_and_sparse((seed, n, q) in topology_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_connected(n, q, &mut rng).unwrap();
        let w = metropolis_weights(&t).unwrap();
        prop_assert!(stochastic_deviation(w.w()).unwrap() <= 1e-12);
        for i in 0..n {
            for j in 0..n {
                if w.w()[(i, j)] != 0.0 {
                    prop_assert!(t.is_adjacent(i, j));
                }
                prop_assert_eq!(w.w()[(i, j)], w.w()[(j, i)]);
            }
        }
        prop_assert!(w.rho_w() < 1.0);
    }

    #[test]
    fn direct_operator_within_bound_and_monotone((seed, n, q) in topology_strategy()) {
        let w = random_mixing(seed, n, q);
        let mut previous = f64::INFINITY;
        for alpha in 1..=10 {
            let op = make_operator(&w, Protocol::Direct, alpha).unwrap();
            prop_assert!(op.rho_bar() <= gap_bound(Protocol::Direct, w.rho_w(), alpha) + 1e-12);
            prop_assert!(op.rho_bar() <= previous + 1e-12);
            previous = op.rho_bar();
        }
    }

    #[test]
    fn operators_preserve_averages((seed, n, q) in topology_strategy(), alpha in 1u32..=10) {
        let w = random_mixing(seed, n, q);
        for protocol in [Protocol::Direct, Protocol::Accelerated] {
            let op = make_operator(&w, protocol, alpha).unwrap();
            let m = op.matrix();
            let rows = m.column_sum().map(|v| (v - 1.0).abs()).max();
            let cols = m.row_sum().map(|v| (v - 1.0).abs()).max();
            prop_assert!(rows <= 1e-10 && cols <= 1e-10, "{:?}: {} {}", protocol, rows, cols);
        }
    }

    #[test]
    fn cached_operator_matches_sequential_steps((seed, n, q) in topology_strategy(), alpha in 1u32..=10) {
        let w = random_mixing(seed, n, q);
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 3) as f64).cos());
        for protocol in [Protocol::Direct, Protocol::Accelerated] {
            let op = make_operator(&w, protocol, alpha).unwrap();
            let a = op.apply(&x).unwrap();
            let b = op.apply_sequential(&w, &x).unwrap();
            prop_assert!((a - b).amax() <= 1e-12);
        }
    }
}
