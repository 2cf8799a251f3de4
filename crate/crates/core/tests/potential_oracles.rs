mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specopt_core::potential::*;

const CELLS: usize = 4000;

fn grid(cells: usize) -> UniformGrid {
    UniformGrid::new(-1.0, 1.0, cells).unwrap()
}

fn ones(g: &UniformGrid) -> Vec<f64> {
    vec![1.0; g.len()]
}

#[test]
fn closed_form_energies() {
    let g = grid(20_000);
    let f = ones(&g);
    let (e, _) = dirichlet_energy(&f, &GridPotential::zero(g)).unwrap();
    assert!((e + 1.0 / 3.0).abs() < 1e-8);
    let (e, _) = dirichlet_energy(&f, &GridPotential::new(g, ones(&g), 1.0).unwrap()).unwrap();
    let exact = 1f64.tanh() - 1.0;
    assert!((e - exact).abs() < 1e-8, "{e} vs {exact}");
    let (oracle, _) = common::schrodinger_energy(g.h(), &f, &ones(&g));
    assert!((e - oracle).abs() < 1e-10, "{e} vs {oracle}");
}

#[test]
fn larger_potentials_raise_the_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let g = grid(1000);
    let f = ones(&g);
    for _ in 0..50 {
        let v = common::random_potential_shape(&mut rng, g.len(), true);
        let big: Vec<f64> = v.iter().map(|x| 10.0 * x).collect();
        let (e, _) = dirichlet_energy(&f, &GridPotential::new(g, v, 1.0).unwrap()).unwrap();
        let (eb, _) = dirichlet_energy(&f, &GridPotential::new(g, big, 1.0).unwrap()).unwrap();
        assert!(eb >= e);
    }
}

#[test]
fn conjugate_exponents() {
    assert_eq!(conjugate_exponent(-1.0), 1.0);
    assert_eq!(conjugate_exponent(2.0), 4.0);
    assert!((conjugate_exponent(-0.5) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let g = grid(40);
    let f: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.5 * x).collect();
    for (q, eps) in [(4.0, 0.0), (1.0, 1e-3), (2.0 / 3.0, 1e-3), (8.0, 0.0), (64.0, 0.0)] {
        let j = ReducedFunctional::new(g, &f, q, eps).unwrap();
        for _ in 0..20 {
            let u: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
            let grad = j.gradient(&u);
            let mut fd = vec![0.0; u.len()];
            for i in 0..u.len() {
                let t = 1e-6 * u[i].abs().max(1e-2);
                let (mut a, mut b) = (u.clone(), u.clone());
                a[i] += t;
                b[i] -= t;
                fd[i] = (j.value(&a) - j.value(&b)) / (2.0 * t);
            }
            let diff = grad.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let norm = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(diff <= 1e-5 * norm, "q={q}: rel {}", diff / norm);
        }
    }
}

#[test]
fn p2_dominates_random_admissible_potentials() {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let g = grid(CELLS);
    let f = ones(&g);
    let s = maximize_potential(&g, &f, 2.0).unwrap();
    assert!(s.potential.is_admissible());
    assert!(s.coupling_residual <= 1e-6);
    let (check, u) = common::schrodinger_energy(g.h(), &f, &s.potential.values);
    assert!((check - s.energy).abs() <= 1e-12);
    let drift = u.iter().zip(&s.state).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(drift <= 1e-6);
    for _ in 0..100 {
        let w = GridPotential::normalized(g, common::random_potential_shape(&mut rng, g.len(), true), 2.0).unwrap();
        let (e, _) = common::schrodinger_energy(g.h(), &f, &w.values);
        assert!(e <= s.energy, "{e} > {}", s.energy);
    }
}

#[test]
fn p2_matches_a_nested_search() {
    // Outer: maximize over V ∝ (1 - x²)^α (1 + β x²), inner: the energy.
    let g = grid(1000);
    let f = ones(&g);
    let nodes = g.nodes();
    let energy = |alpha: f64, beta: f64| {
        let shape: Vec<f64> = nodes.iter().map(|x| (1.0 - x * x).powf(alpha) * (1.0 + beta * x * x)).collect();
        let v = GridPotential::normalized(g, shape, 2.0).unwrap();
        common::schrodinger_energy(g.h(), &f, &v.values).0
    };
    let mut best = (f64::NEG_INFINITY, 1.0, 0.0);
    for i in 0..=40 {
        for j in 0..=40 {
            let (a, b) = (0.5 + 2.5 * i as f64 / 40.0, -0.9 + 3.0 * j as f64 / 40.0);
            let e = energy(a, b);
            if e > best.0 {
                best = (e, a, b);
            }
        }
    }
    let (mut e, mut a, mut b) = best;
    let mut step = 0.05;
    while step > 1e-6 {
        let mut moved = false;
        for (da, db) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let t = energy(a + da, b + db);
            if t > e {
                (e, a, b) = (t, a + da, b + db);
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    let s = maximize_potential(&g, &f, 2.0).unwrap();
    assert!(e <= s.energy + 1e-12);
    assert!(s.energy - e <= 1e-4 * s.energy.abs(), "{} vs {e}", s.energy);
}

#[test]
fn p_minus_one_is_below_random_competitors() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let g = grid(CELLS);
    let f = ones(&g);
    let s = minimize_potential(&g, &f, -1.0, DEFAULT_SEED).unwrap();
    assert!((s.potential.constraint - 1.0).abs() <= 1e-10);
    assert!(s.coupling_residual <= 1e-6 && s.residual <= 1e-8);
    let constant = GridPotential::constant(g, -1.0).unwrap();
    let (ec, _) = common::schrodinger_energy(g.h(), &f, &constant.values);
    let (e2, _) = common::schrodinger_energy(g.h(), &f, &vec![2.0; g.len()]);
    assert!(s.energy <= ec && s.energy <= e2);
    for _ in 0..100 {
        let w = GridPotential::normalized(g, common::random_potential_shape(&mut rng, g.len(), false), -1.0).unwrap();
        let (e, _) = common::schrodinger_energy(g.h(), &f, &w.values);
        assert!(s.energy <= e, "{} > {e}", s.energy);
    }
}

#[test]
fn nonconvex_branch_is_flagged_and_admissible() {
    let g = grid(1000);
    let f = ones(&g);
    let s = minimize_potential(&g, &f, -0.5, DEFAULT_SEED).unwrap();
    assert!(s.local && s.regime == Regime::Minimize);
    assert!(s.potential.is_admissible());
    let c = GridPotential::constant(g, -0.5).unwrap();
    assert!(s.energy <= dirichlet_energy(&f, &c).unwrap().0);
    let again = minimize_potential(&g, &f, -0.5, DEFAULT_SEED).unwrap();
    assert_eq!(again, s);
}

#[test]
fn scaling_the_source_keeps_the_potential() {
    for source in [SourceTerm::Sin, SourceTerm::Step] {
        let g = grid(2000);
        let f = source.sample(&g).unwrap();
        let base = maximize_potential(&g, &f, 3.0).unwrap();
        let vmax = base.potential.values.iter().copied().fold(0.0f64, f64::max);
        let umax = base.state.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for c in [0.5, 2.0] {
            let cf: Vec<f64> = f.iter().map(|x| c * x).collect();
            let s = maximize_potential(&g, &cf, 3.0).unwrap();
            for (a, b) in s.potential.values.iter().zip(&base.potential.values) {
                assert!((a - b).abs() <= 1e-6 * vmax);
            }
            for (a, b) in s.state.iter().zip(&base.state) {
                assert!((a - c * b).abs() <= 1e-6 * c * umax);
            }
            let support = |v: &[f64]| v.iter().map(|x| *x > 1e-6 * vmax).collect::<Vec<_>>();
            assert_eq!(support(&s.potential.values), support(&base.potential.values));
        }
    }
}

#[test]
fn energies_converge_at_second_order() {
    let e: Vec<f64> = [250, 500, 1000]
        .iter()
        .map(|&cells| {
            let g = grid(cells);
            maximize_potential(&g, &ones(&g), 2.0).unwrap().energy
        })
        .collect();
    let (d1, d2) = ((e[0] - e[1]).abs(), (e[1] - e[2]).abs());
    let h = 2.0 / 250.0;
    assert!(d1 <= 0.1 * h * h, "{d1}");
    assert!(d2 <= d1 / 3.0, "{d1} {d2}");
}

#[test]
fn p1_constant_source() {
    let g = grid(CELLS);
    let s = maximize_potential_p1(&g, &ones(&g)).unwrap();
    let pl = s.plateau.as_ref().unwrap();
    let (a, m) = (3.0 - 2.0 * 2f64.sqrt(), 6.0 - 4.0 * 2f64.sqrt());
    assert!((pl.extrapolated_half_width - a).abs() < 5e-3);
    assert!((pl.extrapolated_sup - m).abs() < 5e-3);
    assert!((pl.duality - pl.sup).abs() < 1e-3);
    assert!((pl.sup - m).abs() < 1e-3 && (pl.half_width() - a).abs() < 1e-3);
    // ∫_{ω₊} V = 1 forces 2 a f = M, not a = 1/(2M).
    assert!((2.0 * pl.half_width() - pl.sup).abs() < 2e-3);
    assert!((pl.unit_mass_half_width - a).abs() > 1.0);
    assert!(s.potential.is_admissible());
}

#[test]
fn p1_state_is_flat_exactly_on_the_support() {
    for source in [SourceTerm::Constant(1.0), SourceTerm::Sin, SourceTerm::Step] {
        let g = grid(2000);
        let f = source.sample(&g).unwrap();
        let s = maximize_potential_p1(&g, &f).unwrap();
        let m = s.plateau.as_ref().unwrap().sup;
        for (v, u) in s.potential.values.iter().zip(&s.state) {
            if *v > 0.0 {
                assert!((u.abs() - m).abs() <= 1e-4 * m, "{source}: {u} vs {m}");
            } else {
                assert!(u.abs() <= m * (1.0 + 1e-10));
            }
        }
    }
}

#[test]
fn odd_source_gives_mirrored_plateaus() {
    let g = grid(2000);
    let f = SourceTerm::Sin.sample(&g).unwrap();
    let s = maximize_potential_p1(&g, &f).unwrap();
    let pl = s.plateau.as_ref().unwrap();
    assert_eq!(pl.omega_plus.len(), pl.omega_minus.len());
    for (p, m) in pl.omega_plus.iter().zip(pl.omega_minus.iter().rev()) {
        assert!((p.0 + m.1).abs() < 1e-9 && (p.1 + m.0).abs() < 1e-9, "{p:?} {m:?}");
    }
    let n = s.state.len();
    for i in 0..n {
        assert!((s.state[i] + s.state[n - 1 - i]).abs() <= 1e-9 * pl.sup);
    }
    assert!((pl.duality - pl.sup).abs() < 1e-6);
}

#[test]
fn demo_rows_are_admissible_and_rise() {
    let rows = nonexistence_demo(&SourceTerm::Constant(1.0), 0.5, 16, -1.0, 1.0).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![1, 2, 4, 8, 16]);
    for r in &rows {
        assert!((r.constraint - 1.0).abs() <= 1e-8);
    }
    assert!(rows.windows(2).all(|w| w[1].energy > w[0].energy));
    for (p, n_max) in [(0.25, 16), (0.75, 4)] {
        let rows = nonexistence_demo(&SourceTerm::Constant(1.0), p, n_max, -1.0, 1.0).unwrap();
        assert!(rows.windows(2).all(|w| w[1].energy > w[0].energy), "p={p}");
    }
}
