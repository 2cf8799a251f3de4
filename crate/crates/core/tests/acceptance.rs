//! The ten headline checks, one line each. Run with
//! `cargo test -p specopt-core --test acceptance`.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specopt_core::function::{EdgeFunction, GraphFunction};
use specopt_core::graph::{Edge, GraphBuilder, MetricGraph, Vertex};
use specopt_core::optimize::{budget_grid, optimize, shape_switches, sweep, OptimizerOptions, PinSet};
use specopt_core::potential::*;
use specopt_core::rearrange::polya_szego_rearrange;
use specopt_core::spectrum::eigenvalues;
use specopt_core::topology::{admits_pin_permutation, Role};
use specopt_core::torsion::solve_torsion;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, elapsed: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn exact_torsion() -> Outcome {
    let start = Instant::now();
    let edge = |b: bool| {
        GraphBuilder::new().vertex("a", true).vertex("b", b).edge("a", "b", 1.0).build().unwrap()
    };
    let dd = solve_torsion(&edge(true)).map_err(|e| e.to_string())?.energy;
    let dn = solve_torsion(&edge(false)).map_err(|e| e.to_string())?.energy;
    let two_pin = GraphBuilder::new()
        .pinned("p", &[0.0, 0.0])
        .pinned("q", &[1.0, 0.0])
        .vertex("s", false)
        .vertex("t", false)
        .edge("p", "s", 0.5)
        .edge("s", "q", 0.5)
        .edge("s", "t", 1.0)
        .build()
        .unwrap();
    let tp = solve_torsion(&two_pin).map_err(|e| e.to_string())?.energy;
    let elapsed = start.elapsed();
    let fem = common::fem_torsion_energy(&two_pin, 1e-4);
    ensure((dd + 1.0 / 24.0).abs() <= 1e-12, || format!("unit edge {dd}"))?;
    ensure((dn + 1.0 / 6.0).abs() <= 1e-12, || format!("Dirichlet-Neumann edge {dn}"))?;
    ensure((tp + 11.0 / 24.0).abs() <= 1e-12, || format!("two-pin {tp}"))?;
    ensure((tp - fem).abs() <= 1e-8, || format!("two-pin {tp} vs mesh {fem}"))?;
    within(Duration::from_secs(1), elapsed)?;
    Ok(format!("{dd:.15} {dn:.15} {tp:.15}, mesh gap {:.1e}", (tp - fem).abs()))
}

fn spectrum_convergence() -> Outcome {
    let start = Instant::now();
    let interval = GraphBuilder::new().vertex("a", true).vertex("b", true).edge("a", "b", PI).build().unwrap();
    let fine = eigenvalues(&interval, 3, 1e-3).map_err(|e| e.to_string())?.eigenvalues;
    let mut worst: f64 = 0.0;
    for (k, l) in fine.iter().enumerate() {
        let exact = ((k + 1) * (k + 1)) as f64;
        worst = worst.max((l - exact).abs() / exact);
    }
    ensure(worst <= 1e-4, || format!("interval rel. error {worst:.2e}"))?;
    let errors: Vec<Vec<f64>> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&h| {
            let r = eigenvalues(&interval, 3, h).unwrap();
            r.eigenvalues.iter().enumerate().map(|(k, l)| (l - ((k + 1) * (k + 1)) as f64).abs()).collect()
        })
        .collect();
    let mut rates = Vec::new();
    for k in 0..3 {
        for w in errors.windows(2) {
            rates.push((w[0][k] / w[1][k]).log2());
        }
    }
    ensure(rates.iter().all(|r| (1.8..2.2).contains(r)), || format!("rates {rates:?}"))?;
    let star = GraphBuilder::new()
        .vertex("c", false)
        .vertex("x", true)
        .vertex("y", true)
        .vertex("z", true)
        .edge("c", "x", 1.0)
        .edge("c", "y", 1.0)
        .edge("c", "z", 1.0)
        .build()
        .unwrap();
    let l1 = eigenvalues(&star, 1, 1e-3).map_err(|e| e.to_string())?.eigenvalues[0];
    let star_err = (l1 - PI * PI / 4.0).abs() / (PI * PI / 4.0);
    ensure(star_err <= 1e-4, || format!("3-star rel. error {star_err:.2e}"))?;
    within(Duration::from_secs(10), start.elapsed())?;
    let (lo, hi) = rates.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    Ok(format!("interval rel. error {worst:.1e}, rates {lo:.3}..{hi:.3}, star rel. error {star_err:.1e}"))
}

fn triangle() -> PinSet {
    PinSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).unwrap()
}

fn triangle_threshold() -> Outcome {
    let start = Instant::now();
    let budgets = budget_grid(1.80, 1.93, 0.005).map_err(|e| e.to_string())?;
    let results = sweep(&triangle(), &budgets, &OptimizerOptions::default())
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let switches = shape_switches(&results);
    ensure(switches.len() == 1, || format!("{} switches: {switches:?}", switches.len()))?;
    let s = &switches[0];
    let target = 1.0 + 3f64.sqrt() / 2.0;
    ensure((s.estimate - target).abs() <= 0.01, || format!("switch at {}", s.estimate))?;
    for r in &results {
        for rot in [[1, 2, 0], [2, 0, 1]] {
            ensure(!admits_pin_permutation(&r.graph, &rot, 1e-6), || format!("symmetric winner at {}", r.budget))?;
        }
    }
    within(Duration::from_secs(300), elapsed)?;
    Ok(format!("{} budgets, one switch at {:.4} ({} -> {}), {elapsed:.1?}", results.len(), s.estimate, s.from, s.to))
}

fn two_pin_optimum() -> Outcome {
    let pins = PinSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for l in [1.5, 2.0, 3.0] {
        let r = optimize(&pins, l, &OptimizerOptions::default()).map_err(|e| e.to_string())?;
        let v = r.topology.roles.iter().position(|&x| x == Role::Pin(0)).unwrap();
        let k = r.topology.edges.iter().position(|&(a, b)| a == v || b == v).unwrap();
        let t = r.lengths[k];
        let (t_oracle, e_oracle) = common::attachment_sweep(l);
        ensure((t - 0.5).abs() <= 1e-3 && (t_oracle - 0.5).abs() <= 1e-3, || format!("l={l}: attaches at {t}"))?;
        ensure((r.energy - e_oracle).abs() <= 1e-8, || format!("l={l}: {} vs {e_oracle}", r.energy))?;
        worst = (worst.0.max((t - 0.5).abs()), worst.1.max((r.energy - e_oracle).abs()));
    }
    Ok(format!("midpoint offset {:.1e}, energy gap {:.1e}", worst.0, worst.1))
}

fn polya_szego() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    let mut margin = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(2..9);
        let extra = rng.random_range(0..3);
        let g = common::random_graph(&mut rng, n, extra, 0.3);
        let values: Vec<f64> = g.vertices().iter().map(|v| if v.dirichlet { 0.0 } else { rng.random_range(0.0..2.0) }).collect();
        let pieces = g
            .edges()
            .iter()
            .map(|e| {
                let m = rng.random_range(1..10);
                let mut s: Vec<f64> = (0..=m).map(|_| rng.random_range(0.0..2.0)).collect();
                s[0] = values[e.from];
                s[m] = values[e.to];
                EdgeFunction::Samples(s)
            })
            .collect();
        let u = GraphFunction::new(&g, pieces).unwrap();
        let r = polya_szego_rearrange(&g, &u).map_err(|e| e.to_string())?;
        margin = margin.min(r.original_energy - r.rearranged_energy);
        if r.rearranged_energy > r.original_energy + 1e-10 {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok(format!("200 functions, 0 violations, smallest gain {margin:.1e}"))
}

fn domain_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..8);
        let extra = rng.random_range(0..3);
        let g = common::random_graph(&mut rng, n, extra, 0.3);
        let before = solve_torsion(&g).map_err(|e| e.to_string())?.energy;
        let mut vertices = g.vertices().to_vec();
        let mut edges = g.edges().to_vec();
        let tip = vertices.len();
        vertices.push(Vertex { label: "new".into(), dirichlet: false, pin: None });
        edges.push(Edge { from: rng.random_range(0..tip), to: tip, length: rng.random_range(0.01..2.0) });
        let after = solve_torsion(&MetricGraph::new(vertices, edges).unwrap()).map_err(|e| e.to_string())?.energy;
        if after > before + 1e-12 * before.abs() {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("100 attachments, 0 violations".into())
}

fn unit_grid(cells: usize) -> UniformGrid {
    UniformGrid::new(-1.0, 1.0, cells).unwrap()
}

fn potential_p2() -> Outcome {
    let g = unit_grid(20_000);
    let f = vec![1.0; g.len()];
    let s = maximize_potential(&g, &f, 2.0).map_err(|e| e.to_string())?;
    ensure(s.coupling_residual <= 1e-6, || format!("coupling residual {:.1e}", s.coupling_residual))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0;
    for _ in 0..100 {
        let w = GridPotential::normalized(g, common::random_potential_shape(&mut rng, g.len(), true), 2.0).unwrap();
        if common::schrodinger_energy(g.h(), &f, &w.values).0 > s.energy {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} competitors beat the optimum"))?;
    let small = unit_grid(40);
    let fs = vec![1.0; small.len()];
    let j = ReducedFunctional::new(small, &fs, conjugate_exponent(2.0), 0.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u: Vec<f64> = (0..small.len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let grad = j.gradient(&u);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..u.len() {
            let t = 1e-6 * u[i].abs().max(1e-2);
            let (mut a, mut b) = (u.clone(), u.clone());
            a[i] += t;
            b[i] -= t;
            let fd = (j.value(&a) - j.value(&b)) / (2.0 * t);
            diff += (grad[i] - fd).powi(2);
            norm += fd * fd;
        }
        worst = worst.max((diff / norm).sqrt());
    }
    ensure(worst <= 1e-5, || format!("gradient rel. error {worst:.1e}"))?;
    Ok(format!(
        "E = {:.10}, coupling residual {:.1e}, 0/100 violations, gradient rel. error {worst:.1e}",
        s.energy, s.coupling_residual
    ))
}

fn potential_p1() -> Outcome {
    let g = unit_grid(20_000);
    let s = maximize_potential_p1(&g, &vec![1.0; g.len()]).map_err(|e| e.to_string())?;
    let pl = s.plateau.as_ref().unwrap();
    let (a, m) = (3.0 - 2.0 * 2f64.sqrt(), 6.0 - 4.0 * 2f64.sqrt());
    let (da, dm) = ((pl.extrapolated_half_width - a).abs(), (pl.extrapolated_sup - m).abs());
    ensure(da <= 5e-3, || format!("extrapolated a = {}", pl.extrapolated_half_width))?;
    ensure(dm <= 5e-3, || format!("extrapolated M = {}", pl.extrapolated_sup))?;
    let dual = (pl.duality - pl.sup).abs();
    ensure(dual <= 1e-3, || format!("duality {} vs M {}", pl.duality, pl.sup))?;
    Ok(format!(
        "extrapolated a = {:.6} (gap {da:.1e}), M = {:.6} (gap {dm:.1e}); exact a = {:.8}, M = {:.8}; duality gap {dual:.1e}",
        pl.extrapolated_half_width,
        pl.extrapolated_sup,
        pl.half_width(),
        pl.sup
    ))
}

fn potential_p_minus_one() -> Outcome {
    let g = unit_grid(20_000);
    let f = vec![1.0; g.len()];
    let s = minimize_potential(&g, &f, -1.0, DEFAULT_SEED).map_err(|e| e.to_string())?;
    let constraint = (s.potential.constraint - 1.0).abs();
    ensure(constraint <= 1e-10, || format!("constraint off by {constraint:.1e}"))?;
    let (e2, _) = common::schrodinger_energy(g.h(), &f, &vec![2.0; g.len()]);
    let constant = GridPotential::constant(g, -1.0).unwrap();
    let (ec, _) = common::schrodinger_energy(g.h(), &f, &constant.values);
    ensure(s.energy <= e2 && s.energy <= ec, || format!("{} above the constant potential {ec}", s.energy))?;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut violations = 0;
    for _ in 0..100 {
        let w = GridPotential::normalized(g, common::random_potential_shape(&mut rng, g.len(), false), -1.0).unwrap();
        if common::schrodinger_energy(g.h(), &f, &w.values).0 < s.energy {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} competitors below the optimum"))?;
    Ok(format!("E = {:.10} vs constant {ec:.10}, 0/100 violations, constraint gap {constraint:.1e}", s.energy))
}

fn nonexistence() -> Outcome {
    let rows = nonexistence_demo(&SourceTerm::Constant(1.0), 0.5, 64, -1.0, 1.0).map_err(|e| e.to_string())?;
    for r in &rows {
        ensure((r.constraint - 1.0).abs() <= 1e-8, || format!("n={}: constraint {}", r.n, r.constraint))?;
    }
    ensure(rows.windows(2).all(|w| w[1].energy > w[0].energy), || "energies not increasing".into())?;
    let (first, last) = (rows[0].energy, rows[rows.len() - 1].energy);
    ensure(rows[rows.len() - 1].n == 64, || "table stops early".into())?;
    let ratio = last.abs() / first.abs();
    ensure(ratio < 0.05, || format!("ratio {ratio}"))?;
    Ok(format!("E(V_1) = {first:.6}, E(V_64) = {last:.3e}, ratio {ratio:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact torsion values", exact_torsion),
        ("spectrum convergence", spectrum_convergence),
        ("triangle threshold", triangle_threshold),
        ("two-pin optimum", two_pin_optimum),
        ("Polya-Szego rearrangement", polya_szego),
        ("domain monotonicity", domain_monotonicity),
        ("potential p = 2", potential_p2),
        ("potential p = 1", potential_p1),
        ("potential p = -1", potential_p_minus_one),
        ("nonexistence for 0 < p < 1", nonexistence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} [{elapsed:.2?}]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} [{elapsed:.2?}]: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
