//! CSV text for the solver outputs. Floats carry 12 significant digits.

use std::fmt::Write;

use crate::function::GraphFunction;
use crate::graph::MetricGraph;
use crate::optimize::OptimizedGraph;
use crate::potential::{DemoRow, PotentialSolution};
use crate::spectrum::SpectrumReport;
use crate::torsion::TorsionSolution;

pub fn float(x: f64) -> String {
    format!("{x:.11e}")
}

/// `edge,x,u` with `samples` equally spaced points per edge, `x` measured
/// from the edge's first vertex.
pub fn function_csv(g: &MetricGraph, u: &GraphFunction, samples: usize) -> String {
    let mut out = String::from("edge,x,u\n");
    for (k, e) in g.edges().iter().enumerate() {
        let values = u.piece(k).sampled(e.length, samples);
        let n = values.len();
        for (i, v) in values.iter().enumerate() {
            let x = e.length * i as f64 / (n - 1) as f64;
            writeln!(out, "{k},{},{}", float(x), float(*v)).unwrap();
        }
    }
    out
}

/// `quantity,value` summary of a torsion solve. The per-vertex table is
/// [`vertex_csv`].
pub fn torsion_summary_csv(g: &MetricGraph, s: &TorsionSolution) -> String {
    let mut out = String::from("quantity,value\n");
    writeln!(out, "energy,{}", float(s.energy)).unwrap();
    writeln!(out, "functional,{}", float(s.functional_value(g))).unwrap();
    writeln!(out, "integral_of_u,{}", float(s.integral_of_u)).unwrap();
    writeln!(out, "total_length,{}", float(g.total_length())).unwrap();
    writeln!(out, "max_kirchhoff_residual,{}", float(s.max_kirchhoff_residual())).unwrap();
    out
}

/// `vertex,dirichlet,value,kirchhoff_residual`.
pub fn vertex_csv(g: &MetricGraph, s: &TorsionSolution) -> String {
    let mut out = String::from("vertex,dirichlet,value,kirchhoff_residual\n");
    for (i, v) in g.vertices().iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            v.label,
            v.dirichlet,
            float(s.vertex_values[i]),
            float(s.kirchhoff_residuals[i])
        )
        .unwrap();
    }
    out
}

/// `index,eigenvalue`, 1-based.
pub fn spectrum_csv(r: &SpectrumReport) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, l) in r.eigenvalues.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, float(*l)).unwrap();
    }
    out
}

/// `x,V,u` at the interior grid nodes.
pub fn potential_csv(s: &PotentialSolution) -> String {
    let mut out = String::from("x,V,u\n");
    let grid = &s.potential.grid;
    for (i, (v, u)) in s.potential.values.iter().zip(&s.state).enumerate() {
        writeln!(out, "{},{},{}", float(grid.node(i)), float(*v), float(*u)).unwrap();
    }
    out
}

/// One row per budget: `budget,energy,topology,shape,residual,lengths` with
/// the lengths separated by `;`.
pub fn sweep_csv(results: &[OptimizedGraph]) -> String {
    let mut out = String::from("budget,energy,topology,shape,residual,lengths\n");
    for r in results {
        let lengths: Vec<String> = r.lengths.iter().map(|x| float(*x)).collect();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            float(r.budget),
            float(r.energy),
            r.topology.id,
            r.shape,
            float(r.diagnostics.first_order_residual),
            lengths.join(";")
        )
        .unwrap();
    }
    out
}

/// `n,height,width,cells,constraint,energy`.
pub fn demo_csv(rows: &[DemoRow]) -> String {
    let mut out = String::from("n,height,width,cells,constraint,energy\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n,
            float(r.height),
            float(r.width),
            r.cells,
            float(r.constraint),
            float(r.energy)
        )
        .unwrap();
    }
    out
}
