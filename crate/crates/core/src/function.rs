//! Functions on metric graphs.
//!
//! A function is one piece per edge, parametrized by arc length measured from
//! the edge's `from` vertex. Reading the same edge from its `to` vertex uses
//! `u_ji(x) = u_ij(l_ij - x)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{MetricGraph, VertexId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EdgeFunction {
    /// `c[0] + c[1] x + c[2] x² + ...` on `[0, l]`.
    Polynomial(Vec<f64>),
    /// Values at `n >= 2` equally spaced points including both endpoints,
    /// interpolated linearly.
    Samples(Vec<f64>),
}

impl EdgeFunction {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match self {
            EdgeFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
            EdgeFunction::Samples(v) => {
                let cells = v.len() - 1;
                let t = (x / length * cells as f64).clamp(0.0, cells as f64);
                let i = (t.floor() as usize).min(cells - 1);
                let frac = t - i as f64;
                v[i] * (1.0 - frac) + v[i + 1] * frac
            }
        }
    }

    pub fn start_value(&self) -> f64 {
        match self {
            EdgeFunction::Polynomial(c) => c.first().copied().unwrap_or(0.0),
            EdgeFunction::Samples(v) => v[0],
        }
    }

    pub fn end_value(&self, length: f64) -> f64 {
        match self {
            EdgeFunction::Polynomial(_) => self.eval(length, length),
            EdgeFunction::Samples(v) => v[v.len() - 1],
        }
    }

    /// `∫_0^l u`.
    pub fn integral(&self, length: f64) -> f64 {
        match self {
            EdgeFunction::Polynomial(c) => poly_integral(c, length),
            EdgeFunction::Samples(v) => {
                let dx = length / (v.len() - 1) as f64;
                v.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * dx
            }
        }
    }

    /// `∫_0^l u²`.
    pub fn integral_sq(&self, length: f64) -> f64 {
        match self {
            EdgeFunction::Polynomial(c) => poly_integral(&poly_mul(c, c), length),
            EdgeFunction::Samples(v) => {
                let dx = length / (v.len() - 1) as f64;
                v.windows(2)
                    .map(|w| (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0)
                    .sum::<f64>()
                    * dx
            }
        }
    }

    /// `∫_0^l |u'|²`.
    pub fn dirichlet_integral(&self, length: f64) -> f64 {
        match self {
            EdgeFunction::Polynomial(c) => {
                let d = poly_derivative(c);
                poly_integral(&poly_mul(&d, &d), length)
            }
            EdgeFunction::Samples(v) => {
                let dx = length / (v.len() - 1) as f64;
                v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / dx
            }
        }
    }

    /// Piecewise-linear samples at `points` equally spaced positions.
    pub fn sampled(&self, length: f64, points: usize) -> Vec<f64> {
        let points = points.max(2);
        match self {
            EdgeFunction::Samples(v) if v.len() == points => v.clone(),
            _ => (0..points)
                .map(|i| self.eval(length * i as f64 / (points - 1) as f64, length))
                .collect(),
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, ck)| k as f64 * ck)
        .collect()
}

fn poly_integral(c: &[f64], length: f64) -> f64 {
    c.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, ck)| acc * length + ck / (k + 1) as f64)
        * length
}

/// A function on every edge of a metric graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphFunction {
    pieces: Vec<EdgeFunction>,
}

impl GraphFunction {
    /// Pairs one piece with each edge of `g` (in edge order).
    pub fn new(g: &MetricGraph, pieces: Vec<EdgeFunction>) -> Result<Self> {
        if pieces.len() != g.edge_count() {
            return Err(Error::FunctionShapeMismatch {
                expected: g.edge_count(),
                found: pieces.len(),
            });
        }
        for p in &pieces {
            if let EdgeFunction::Samples(v) = p {
                if v.len() < 2 {
                    return Err(Error::InvalidArgument(
                        "a sampled edge needs at least two values".into(),
                    ));
                }
            }
        }
        Ok(GraphFunction { pieces })
    }

    /// Linear interpolation of vertex values along every edge.
    pub fn from_vertex_values(g: &MetricGraph, values: &[f64]) -> Result<Self> {
        if values.len() != g.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} vertex values, got {}",
                g.vertex_count(),
                values.len()
            )));
        }
        let pieces = g
            .edges()
            .iter()
            .map(|e| EdgeFunction::Samples(vec![values[e.from], values[e.to]]))
            .collect();
        GraphFunction::new(g, pieces)
    }

    pub fn pieces(&self) -> &[EdgeFunction] {
        &self.pieces
    }

    pub fn piece(&self, edge: usize) -> &EdgeFunction {
        &self.pieces[edge]
    }

    /// Value at arc-length distance `s` from vertex `v` along `edge`.
    pub fn eval_from(&self, g: &MetricGraph, edge: usize, v: VertexId, s: f64) -> f64 {
        let e = &g.edges()[edge];
        let x = if v == e.from { s } else { e.length - s };
        self.pieces[edge].eval(x, e.length)
    }

    /// Value at vertex `v`, read from its first incident edge.
    pub fn vertex_value(&self, g: &MetricGraph, v: VertexId) -> Option<f64> {
        g.incident_edges(v)
            .first()
            .map(|&k| self.endpoint_value(g, k, v))
    }

    fn endpoint_value(&self, g: &MetricGraph, edge: usize, v: VertexId) -> f64 {
        let e = &g.edges()[edge];
        if v == e.from {
            self.pieces[edge].start_value()
        } else {
            self.pieces[edge].end_value(e.length)
        }
    }

    /// Checks `u_ij(0) = u_ik(0)` at every vertex up to `tol`.
    pub fn check_continuity(&self, g: &MetricGraph, tol: f64) -> Result<()> {
        for v in 0..g.vertex_count() {
            let vals: Vec<f64> = g
                .incident_edges(v)
                .iter()
                .map(|&k| self.endpoint_value(g, k, v))
                .collect();
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            if vals.len() > 1 && hi - lo > tol {
                return Err(Error::DiscontinuousAtVertex {
                    vertex: g.vertices()[v].label.clone(),
                    jump: hi - lo,
                });
            }
        }
        Ok(())
    }

    fn continuity_tolerance(&self, g: &MetricGraph) -> f64 {
        let scale = g
            .edges()
            .iter()
            .zip(&self.pieces)
            .map(|(e, p)| p.start_value().abs().max(p.end_value(e.length).abs()))
            .fold(1.0, f64::max);
        1e-9 * scale
    }

    pub fn integral(&self, g: &MetricGraph) -> f64 {
        self.sum_over_edges(g, EdgeFunction::integral)
    }

    pub fn integral_sq(&self, g: &MetricGraph) -> f64 {
        self.sum_over_edges(g, EdgeFunction::integral_sq)
    }

    pub fn dirichlet_integral(&self, g: &MetricGraph) -> f64 {
        self.sum_over_edges(g, EdgeFunction::dirichlet_integral)
    }

    /// `½∫|u'|² - ∫u`, the torsion functional with unit load.
    pub fn torsion_functional(&self, g: &MetricGraph) -> f64 {
        0.5 * self.dirichlet_integral(g) - self.integral(g)
    }

    fn sum_over_edges(&self, g: &MetricGraph, f: impl Fn(&EdgeFunction, f64) -> f64) -> f64 {
        g.edges()
            .iter()
            .zip(&self.pieces)
            .map(|(e, p)| f(p, e.length))
            .sum()
    }

    /// `(∫u² + ∫|u'|²)^{1/2}`, summed edge by edge.
    pub fn h1_norm(&self, g: &MetricGraph) -> Result<f64> {
        self.check_continuity(g, self.continuity_tolerance(g))?;
        Ok((self.integral_sq(g) + self.dirichlet_integral(g)).sqrt())
    }

    /// Piecewise-linear version with `points` samples per edge.
    pub fn sampled(&self, g: &MetricGraph, points: usize) -> GraphFunction {
        GraphFunction {
            pieces: g
                .edges()
                .iter()
                .zip(&self.pieces)
                .map(|(e, p)| EdgeFunction::Samples(p.sampled(e.length, points)))
                .collect(),
        }
    }
}

/// Free-function form of [`GraphFunction::h1_norm`].
pub fn h1_norm(g: &MetricGraph, u: &GraphFunction) -> Result<f64> {
    if u.pieces.len() != g.edge_count() {
        return Err(Error::FunctionShapeMismatch {
            expected: g.edge_count(),
            found: u.pieces.len(),
        });
    }
    u.h1_norm(g)
}
