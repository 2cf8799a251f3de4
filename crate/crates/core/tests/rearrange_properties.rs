mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specopt_core::function::{EdgeFunction, GraphFunction};
use specopt_core::graph::MetricGraph;
use specopt_core::rearrange::{polya_szego_rearrange, sublevel_measure};
use specopt_core::torsion::solve_torsion;

/// Nonnegative piecewise-linear function, zero on the Dirichlet vertices.
fn random_function(g: &MetricGraph, rng: &mut ChaCha8Rng) -> GraphFunction {
    let values: Vec<f64> = g
        .vertices()
        .iter()
        .map(|v| if v.dirichlet { 0.0 } else { rng.random_range(0.0..2.0) })
        .collect();
    let pieces = g
        .edges()
        .iter()
        .map(|e| {
            let m = rng.random_range(1..10);
            let mut s: Vec<f64> = (0..=m)
                .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..2.0) })
                .collect();
            s[0] = values[e.from];
            s[m] = values[e.to];
            EdgeFunction::Samples(s)
        })
        .collect();
    GraphFunction::new(g, pieces).unwrap()
}

#[test]
fn two_hundred_random_functions_never_gain_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut violations = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..9);
        let extra = rng.random_range(0..3);
        let g = common::random_graph(&mut rng, n, extra, 0.3);
        let u = random_function(&g, &mut rng);
        let r = polya_szego_rearrange(&g, &u).unwrap();
        if r.rearranged_energy > r.original_energy + 1e-10 {
            violations += 1;
        }
        assert!((r.original_energy - u.torsion_functional(&g)).abs() <= 1e-10 * r.original_energy.abs().max(1.0));
    }
    assert_eq!(violations, 0);
}

#[test]
fn torsion_functions_rearrange_below_their_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..30 {
        let g = common::random_tree(&mut rng, 5, 0.3);
        let s = solve_torsion(&g).unwrap();
        let r = polya_szego_rearrange(&g, &s.solution).unwrap();
        assert!(r.rearranged_energy <= r.original_energy + 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distribution_is_preserved(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_graph(&mut rng, n, 1, 0.3);
        let u = random_function(&g, &mut rng);
        let r = polya_szego_rearrange(&g, &u).unwrap();
        prop_assert!((r.length - g.total_length()).abs() <= 1e-12 * r.length);
        prop_assert!(r.nodes.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-14));
        for _ in 0..10 {
            let tau = rng.random_range(0.0..2.0);
            let a = sublevel_measure(&g, &u, tau);
            let b = r.sublevel_measure(tau);
            prop_assert!((a - b).abs() <= 1e-9 * r.length, "tau {}: {} vs {}", tau, a, b);
        }
    }
}
