//! One function per subcommand. Each writes its artifacts and returns the
//! manifest describing them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use specopt_core::export::{self, float};
use specopt_core::graph::MetricGraph;
use specopt_core::optimize::{self, OptimizedGraph, OptimizerOptions, PinSet};
use specopt_core::potential::{self, Regime, UniformGrid, EPSILON_SCHEDULE, NONCONVEX_STARTS, SUP_NORM_EXPONENTS};
use specopt_core::spectrum::eigenvalues;
use specopt_core::torsion::solve_torsion;

use crate::config::{self, Command, Output};
use crate::svg;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub parameters: Value,
    pub results: Value,
    pub artifacts: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    svg: bool,
    written: Vec<String>,
}

impl Artifacts {
    fn new(output: &Output) -> Result<Self, CliError> {
        fs::create_dir_all(&output.out).map_err(|e| CliError::Io(format!("{}: {e}", output.out.display())))?;
        Ok(Artifacts {
            dir: output.out.clone(),
            svg: output.svg(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_svg(&mut self, name: &str, render: impl FnOnce() -> Result<String, svg::RenderError>) -> Result<(), CliError> {
        if self.svg {
            let text = render()?;
            self.write(name, &text)?;
        }
        Ok(())
    }

    fn finish(mut self, command: &'static str, parameters: Value, results: Value) -> Result<Manifest, CliError> {
        self.written.push("manifest.json".into());
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            parameters,
            results,
            artifacts: self.written.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        self.written.pop();
        self.write("manifest.json", &text)?;
        Ok(manifest)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<MetricGraph, CliError> {
    Ok(read(path)?.parse::<MetricGraph>()?)
}

pub fn run(command: &Command) -> Result<Manifest, CliError> {
    match command {
        Command::SolveGraph { input, mesh, output } => solve_graph(input, *mesh, output),
        Command::Spectrum { input, mesh, count, output } => spectrum(input, *mesh, *count, output),
        Command::OptimizeGraph { input, budget, sweep, starts, seed, output } => {
            let seed = config::resolve_seed(*seed, std::env::var(config::SEED_ENV).ok())?;
            optimize_graph(input, *budget, sweep.as_deref(), *starts, seed, output)
        }
        Command::OptimizePotential { p, f, domain, mesh, seed, output } => {
            let seed = config::resolve_seed(*seed, std::env::var(config::SEED_ENV).ok())?;
            optimize_potential(*p, f, domain, *mesh, seed, output)
        }
        Command::DemoNonexistence { p, f, domain, n_max, output } => demo(*p, f, domain, *n_max, output),
    }
}

fn check_mesh(h: f64) -> Result<(), CliError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("--mesh must be positive, got {h}")))
    }
}

fn solve_graph(input: &Path, mesh: f64, output: &Output) -> Result<Manifest, CliError> {
    check_mesh(mesh)?;
    let g = read_graph(input)?;
    let s = solve_torsion(&g)?;
    let longest = g.edges().iter().map(|e| e.length).fold(0.0, f64::max);
    let samples = ((longest / mesh).ceil() as usize + 1).clamp(2, 1_000_000);
    let mut out = Artifacts::new(output)?;
    out.write("torsion.csv", &export::torsion_summary_csv(&g, &s))?;
    out.write("vertices.csv", &export::vertex_csv(&g, &s))?;
    out.write("solution.csv", &export::function_csv(&g, &s.solution, samples))?;
    out.write("graph.txt", &g.to_text())?;
    out.write_svg("graph.svg", || svg::graph_sketch(&g, &[], "graph"))?;
    out.write_svg("solution.svg", || svg::unrolled_plot(&g, &s.solution, samples, "torsion function, edges unrolled"))?;
    let stats = g.stats();
    out.finish(
        "solve-graph",
        json!({ "input": input.display().to_string(), "sample_spacing": mesh }),
        json!({
            "energy": s.energy,
            "functional": s.functional_value(&g),
            "integral_of_u": s.integral_of_u,
            "max_kirchhoff_residual": s.max_kirchhoff_residual(),
            "total_length": g.total_length(),
            "vertices": g.vertex_count(),
            "edges": g.edge_count(),
            "is_tree": stats.is_tree,
        }),
    )
}

fn spectrum(input: &Path, mesh: f64, count: usize, output: &Output) -> Result<Manifest, CliError> {
    check_mesh(mesh)?;
    let g = read_graph(input)?;
    let r = eigenvalues(&g, count, mesh)?;
    let mut out = Artifacts::new(output)?;
    out.write("spectrum.csv", &export::spectrum_csv(&r))?;
    out.write_svg("eigenfunction1.svg", || {
        svg::unrolled_plot(&g, &r.eigenfunctions[0], 201, "first eigenfunction, edges unrolled")
    })?;
    out.finish(
        "spectrum",
        json!({ "input": input.display().to_string(), "mesh": r.h, "count": count }),
        json!({ "eigenvalues": r.eigenvalues, "iterations": r.iterations, "no_dirichlet": r.no_dirichlet }),
    )
}

fn graph_report(r: &OptimizedGraph) -> Value {
    json!({
        "budget": r.budget,
        "energy": r.energy,
        "topology": r.topology.id,
        "shape": r.shape,
        "lengths": r.lengths,
        "placement": r.vertex_placement,
        "labels": r.graph.vertices().iter().map(|v| v.label.clone()).collect::<Vec<_>>(),
        "diagnostics": r.diagnostics,
    })
}

fn optimize_graph(
    input: &Path,
    budget: Option<f64>,
    sweep: Option<&str>,
    starts: usize,
    seed: u64,
    output: &Output,
) -> Result<Manifest, CliError> {
    let pins = PinSet::new(config::parse_pins(&read(input)?)?)?;
    if starts == 0 {
        return Err(CliError::Config("--starts must be at least 1".into()));
    }
    let options = OptimizerOptions { starts, seed, ..Default::default() };
    let parameters = json!({
        "input": input.display().to_string(),
        "pins": pins.points(),
        "budget": budget,
        "sweep": sweep,
        "options": options,
    });
    let mut out;
    if let Some(l) = budget {
        let r = optimize::optimize(&pins, l, &options)?;
        let s = solve_torsion(&r.graph)?;
        out = Artifacts::new(output)?;
        out.write("graph.txt", &r.graph.to_text())?;
        out.write("torsion.csv", &export::torsion_summary_csv(&r.graph, &s))?;
        out.write("solution.csv", &export::function_csv(&r.graph, &s.solution, 101))?;
        let title = format!("budget {l}: {}", r.shape);
        out.write_svg("graph.svg", || svg::graph_sketch(&r.graph, &r.vertex_placement, &title))?;
        return out.finish("optimize-graph", parameters, graph_report(&r));
    }
    let range = config::parse_range(sweep.expect("clap requires --budget or --sweep"), 3)?;
    let budgets = optimize::budget_grid(range[0], range[1], range[2])?;
    let results = optimize::sweep(&pins, &budgets, &options)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let switches = optimize::shape_switches(&results);
    out = Artifacts::new(output)?;
    out.write("sweep.csv", &export::sweep_csv(&results))?;
    let mut thresholds = String::from("lower,upper,estimate,from,to\n");
    for s in &switches {
        thresholds += &format!("{},{},{},{},{}\n", float(s.lower), float(s.upper), float(s.estimate), s.from, s.to);
    }
    out.write("thresholds.csv", &thresholds)?;
    let points: Vec<(f64, f64)> = results.iter().map(|r| (r.budget, r.energy)).collect();
    out.write_svg("sweep.svg", || svg::sweep_plot(&points, &switches, "torsion energy of the best tree"))?;
    let winners: Vec<Value> = results
        .iter()
        .map(|r| json!({ "budget": r.budget, "energy": r.energy, "shape": r.shape, "topology": r.topology.id }))
        .collect();
    out.finish(
        "optimize-graph",
        parameters,
        json!({ "switches": switches, "winners": winners }),
    )
}

fn optimize_potential(p: f64, f: &str, domain: &str, mesh: f64, seed: u64, output: &Output) -> Result<Manifest, CliError> {
    check_mesh(mesh)?;
    let (x0, x1) = config::parse_domain(domain)?;
    let source = config::parse_source(f)?;
    let grid = UniformGrid::with_width(x0, x1, mesh)?;
    let values = source.sample(&grid)?;
    let s = if p > 1.0 {
        potential::maximize_potential(&grid, &values, p)?
    } else if p == 1.0 {
        potential::maximize_potential_p1(&grid, &values)?
    } else if p < 0.0 {
        potential::minimize_potential(&grid, &values, p, seed)?
    } else if p > 0.0 {
        return Err(CliError::Infeasible(format!(
            "no maximizing potential exists for 0 < p < 1 (p = {p}); see demo-nonexistence"
        )));
    } else {
        return Err(CliError::Config(format!("--p must be nonzero and finite, got {p}")));
    };
    let mut out = Artifacts::new(output)?;
    out.write("potential.csv", &export::potential_csv(&s))?;
    let x = grid.nodes();
    out.write_svg("potential.svg", || {
        svg::potential_plot(&x, &s.potential.values, &s.state, &format!("p = {p}, f = {f}"))
    })?;
    let mut results = json!({
        "energy": s.energy,
        "regime": s.regime,
        "constraint": s.potential.constraint,
        "state_residual": s.residual,
        "coupling_residual": s.coupling_residual,
        "iterations": s.iterations,
        "local": s.local,
        "epsilon": s.epsilon,
    });
    if let Some(pl) = &s.plateau {
        results["sup_norm"] = json!(pl.sup);
        results["half_width"] = json!(pl.half_width());
        results["plateau"] = json!(pl);
    }
    let schedule: Value = match s.regime {
        Regime::Minimize => json!(EPSILON_SCHEDULE),
        _ => Value::Null,
    };
    out.finish(
        "optimize-potential",
        json!({
            "p": p,
            "q": potential::conjugate_exponent(p),
            "f": f,
            "domain": [x0, x1],
            "h": grid.h(),
            "cells": grid.cells,
            "seed": seed,
            "starts": if s.local { NONCONVEX_STARTS } else { 1 },
            "epsilon_schedule": schedule,
            "sup_norm_exponents": if s.regime == Regime::MaximizeSupNorm { json!(SUP_NORM_EXPONENTS) } else { Value::Null },
        }),
        results,
    )
}

fn demo(p: f64, f: &str, domain: &str, n_max: usize, output: &Output) -> Result<Manifest, CliError> {
    let (x0, x1) = config::parse_domain(domain)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(CliError::Config(format!("demo-nonexistence needs 0 < p < 1, got {p}")));
    }
    let source = config::parse_source(f)?;
    let rows = potential::nonexistence_demo(&source, p, n_max, x0, x1)?;
    let mut out = Artifacts::new(output)?;
    out.write("demo.csv", &export::demo_csv(&rows))?;
    let increasing = rows.windows(2).all(|w| w[1].energy > w[0].energy);
    out.finish(
        "demo-nonexistence",
        json!({ "p": p, "f": f, "domain": [x0, x1], "n_max": n_max }),
        json!({ "rows": rows, "strictly_increasing": increasing }),
    )
}
