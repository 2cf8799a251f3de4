//! Monotone rearrangement of a nonnegative graph function onto an interval.
//!
//! The distribution function `τ ↦ |{u ≤ τ}|` of a piecewise-linear function is
//! itself piecewise linear in `τ`, with jumps where `u` is flat. Its
//! generalized inverse is the increasing rearrangement `v` on
//! `[0, total length]`, again piecewise linear, so both energies are computed
//! in closed form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{EdgeFunction, GraphFunction};
use crate::graph::MetricGraph;

/// Samples per edge used when the input is given by polynomials.
pub const POLYNOMIAL_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rearrangement {
    /// Length of the interval, equal to the total length of the graph.
    pub length: f64,
    /// Nodes `(s, v(s))` of the rearranged function; `v` is linear between
    /// consecutive nodes and nondecreasing.
    pub nodes: Vec<(f64, f64)>,
    /// `½∫|v'|² - ∫v`.
    pub rearranged_energy: f64,
    /// `½∫|u'|² - ∫u` of the (piecewise-linear) input.
    pub original_energy: f64,
}

impl Rearrangement {
    pub fn eval(&self, s: f64) -> f64 {
        let i = self.nodes.partition_point(|&(x, _)| x <= s);
        if i == 0 {
            return self.nodes[0].1;
        }
        if i == self.nodes.len() {
            return self.nodes[i - 1].1;
        }
        let (s0, v0) = self.nodes[i - 1];
        let (s1, v1) = self.nodes[i];
        if s1 == s0 {
            v1
        } else {
            v0 + (v1 - v0) * (s - s0) / (s1 - s0)
        }
    }

    /// Measure of `{v ≤ τ}`.
    pub fn sublevel_measure(&self, tau: f64) -> f64 {
        let mut m = 0.0;
        for w in self.nodes.windows(2) {
            let ((s0, v0), (s1, v1)) = (w[0], w[1]);
            if v1 <= tau {
                m = s1;
            } else if v0 <= tau {
                m = s0 + (s1 - s0) * (tau - v0) / (v1 - v0);
                break;
            } else {
                break;
            }
        }
        m
    }
}

/// One linear piece of the input: width and end values.
struct Piece {
    dx: f64,
    y0: f64,
    y1: f64,
}

/// Measure of `{u ≤ τ}` for a graph function, computed exactly from its
/// piecewise-linear representation.
pub fn sublevel_measure(g: &MetricGraph, u: &GraphFunction, tau: f64) -> f64 {
    pieces(g, u)
        .iter()
        .map(|p| {
            let (lo, hi) = (p.y0.min(p.y1), p.y0.max(p.y1));
            if tau >= hi {
                p.dx
            } else if tau < lo {
                0.0
            } else {
                p.dx * (tau - lo) / (hi - lo)
            }
        })
        .sum()
}

fn pieces(g: &MetricGraph, u: &GraphFunction) -> Vec<Piece> {
    let mut out = Vec::new();
    for (e, f) in g.edges().iter().zip(u.pieces()) {
        let values = match f {
            EdgeFunction::Samples(v) => v.clone(),
            EdgeFunction::Polynomial(_) => f.sampled(e.length, POLYNOMIAL_SAMPLES),
        };
        let dx = e.length / (values.len() - 1) as f64;
        out.extend(values.windows(2).map(|w| Piece { dx, y0: w[0], y1: w[1] }));
    }
    out
}

/// Rearranges `u` into the increasing function on `[0, l(Γ)]` with the same
/// distribution and returns both energies.
///
/// Polynomial pieces are replaced by [`POLYNOMIAL_SAMPLES`] samples first;
/// both energies then refer to that piecewise-linear function.
pub fn polya_szego_rearrange(g: &MetricGraph, u: &GraphFunction) -> Result<Rearrangement> {
    if u.pieces().len() != g.edge_count() {
        return Err(Error::FunctionShapeMismatch {
            expected: g.edge_count(),
            found: u.pieces().len(),
        });
    }
    let pieces = pieces(g, u);
    let scale = pieces
        .iter()
        .fold(1.0f64, |m, p| m.max(p.y0.abs()).max(p.y1.abs()));
    let tol = 1e-12 * scale;
    let min = pieces
        .iter()
        .fold(f64::INFINITY, |m, p| m.min(p.y0).min(p.y1));
    if min < -tol {
        return Err(Error::NegativeValues { min });
    }
    let pl = GraphFunction::new(
        g,
        g.edges()
            .iter()
            .zip(u.pieces())
            .map(|(e, f)| match f {
                EdgeFunction::Samples(_) => f.clone(),
                EdgeFunction::Polynomial(_) => {
                    EdgeFunction::Samples(f.sampled(e.length, POLYNOMIAL_SAMPLES))
                }
            })
            .collect(),
    )?;
    pl.check_continuity(g, 1e-9 * scale)?;
    for v in g.dirichlet_vertices() {
        if let Some(val) = pl.vertex_value(g, v) {
            if val.abs() > tol {
                return Err(Error::NotZeroOnDirichlet {
                    vertex: g.vertices()[v].label.clone(),
                    value: val,
                });
            }
        }
    }
    let original_energy = pl.torsion_functional(g);

    let clamp = |y: f64| y.max(0.0);
    let mut levels: Vec<f64> = pieces
        .iter()
        .flat_map(|p| [clamp(p.y0), clamp(p.y1)])
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let index = |y: f64| levels.partition_point(|&t| t < y);

    // slope of the distribution function on [levels[j], levels[j+1]] and
    // atoms at levels[j]
    let mut slope_diff = vec![0.0; levels.len() + 1];
    let mut atoms = vec![0.0; levels.len()];
    for p in &pieces {
        let (lo, hi) = (clamp(p.y0.min(p.y1)), clamp(p.y0.max(p.y1)));
        if hi == lo {
            atoms[index(lo)] += p.dx;
        } else {
            let s = p.dx / (hi - lo);
            slope_diff[index(lo)] += s;
            slope_diff[index(hi)] -= s;
        }
    }

    let mut nodes = Vec::with_capacity(2 * levels.len());
    let mut rearranged_energy = 0.0;
    let mut measure = 0.0;
    let mut slope = 0.0;
    nodes.push((0.0, levels[0]));
    for j in 0..levels.len() {
        let tau = levels[j];
        if atoms[j] > 0.0 {
            rearranged_energy -= tau * atoms[j];
            measure += atoms[j];
            nodes.push((measure, tau));
        }
        slope += slope_diff[j];
        if j + 1 < levels.len() {
            let rise = levels[j + 1] - tau;
            let run = slope * rise;
            if run > 0.0 {
                rearranged_energy += 0.5 * rise * rise / run - 0.5 * (tau + levels[j + 1]) * run;
                measure += run;
                nodes.push((measure, levels[j + 1]));
            }
        }
    }
    let length = g.total_length();
    if let Some(last) = nodes.last_mut() {
        // absorb rounding in the accumulated measure
        last.0 = length;
    }
    Ok(Rearrangement {
        length,
        nodes,
        rearranged_energy,
        original_energy,
    })
}
