//! Exact torsion solutions on metric graphs.
//!
//! With unit load, the minimizer of `½∫|u'|² - ∫u` is a quadratic with
//! `u'' = -1` on every edge, so only the vertex values are unknown. On an edge
//! of length `L` with end values `a`, `b`,
//!
//! ```text
//! u(x) = -x²/2 + c x + a,   c = (b - a)/L + L/2,
//! ```
//!
//! and `c` is the derivative leaving the `from` vertex. Kirchhoff's condition
//! at the free vertices is then a weighted graph Laplacian system.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{EdgeFunction, GraphFunction};
use crate::graph::MetricGraph;
use crate::linalg::dense_solve;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorsionSolution {
    /// One quadratic `[a, c, -1/2]` per edge.
    pub solution: GraphFunction,
    /// Minimum of `½∫|u'|² - ∫u`, computed as `-½∫u`.
    pub energy: f64,
    pub vertex_values: Vec<f64>,
    /// Sum of outgoing derivatives at every vertex.
    pub fluxes: Vec<f64>,
    /// Flux at free vertices, zero at Dirichlet vertices.
    pub kirchhoff_residuals: Vec<f64>,
    pub integral_of_u: f64,
}

impl TorsionSolution {
    /// `½∫|u'|² - ∫u` evaluated from the polynomials, independently of the
    /// closed form used for `energy`.
    pub fn functional_value(&self, g: &MetricGraph) -> f64 {
        self.solution.torsion_functional(g)
    }

    pub fn max_kirchhoff_residual(&self) -> f64 {
        self.kirchhoff_residuals
            .iter()
            .fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Integral of the torsion profile over an edge with end values `a`, `b`.
pub fn edge_integral(length: f64, a: f64, b: f64) -> f64 {
    length.powi(3) / 12.0 + 0.5 * (a + b) * length
}

/// Solves `-u'' = 1` on `g` with `u = 0` at the Dirichlet vertices and
/// Kirchhoff conditions elsewhere.
pub fn solve_torsion(g: &MetricGraph) -> Result<TorsionSolution> {
    let n = g.vertex_count();
    let mut index = vec![usize::MAX; n];
    let mut free = Vec::new();
    for (v, vert) in g.vertices().iter().enumerate() {
        if !vert.dirichlet {
            index[v] = free.len();
            free.push(v);
        }
    }
    if free.len() == n {
        return Err(Error::NoDirichletVertex);
    }

    let m = free.len();
    let mut a = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for e in g.edges() {
        let w = 1.0 / e.length;
        for (p, q) in [(e.from, e.to), (e.to, e.from)] {
            let i = index[p];
            if i == usize::MAX {
                continue;
            }
            a[(i, i)] += w;
            rhs[i] += 0.5 * e.length;
            let j = index[q];
            if j != usize::MAX {
                a[(i, j)] -= w;
            }
        }
    }
    let x = dense_solve(a, rhs)?;

    let mut values = vec![0.0; n];
    for (i, &v) in free.iter().enumerate() {
        values[v] = x[i];
    }
    Ok(assemble(g, values))
}

fn assemble(g: &MetricGraph, values: Vec<f64>) -> TorsionSolution {
    let mut fluxes = vec![0.0; g.vertex_count()];
    let mut integral = 0.0;
    let mut pieces = Vec::with_capacity(g.edge_count());
    for e in g.edges() {
        let (ua, ub, l) = (values[e.from], values[e.to], e.length);
        let c = (ub - ua) / l + 0.5 * l;
        fluxes[e.from] += c;
        // derivative leaving `to`: -(u'(l)) = -(c - l)
        fluxes[e.to] += l - c;
        integral += edge_integral(l, ua, ub);
        pieces.push(EdgeFunction::Polynomial(vec![ua, c, -0.5]));
    }
    let kirchhoff_residuals = fluxes
        .iter()
        .zip(g.vertices())
        .map(|(&f, v)| if v.dirichlet { 0.0 } else { f })
        .collect();
    TorsionSolution {
        solution: GraphFunction::new(g, pieces).expect("one piece per edge"),
        energy: -0.5 * integral,
        vertex_values: values,
        fluxes,
        kirchhoff_residuals,
        integral_of_u: integral,
    }
}

/// Torsion solver specialised to trees with fixed structure and varying
/// lengths.
///
/// Uses one sweep up and one sweep down the tree (no matrix), which stays
/// well conditioned when some lengths are tiny. Also returns the derivative
/// of the energy with respect to each length.
#[derive(Debug, Clone)]
pub struct TreeSolver {
    edges: Vec<(usize, usize)>,
    dirichlet: Vec<bool>,
    /// Vertices in BFS order from a Dirichlet root.
    order: Vec<usize>,
    /// `(parent, edge)` for every non-root vertex.
    parent: Vec<Option<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEvaluation {
    pub energy: f64,
    pub vertex_values: Vec<f64>,
    /// `∂E/∂L_e`; always negative.
    pub gradient: Vec<f64>,
}

impl TreeSolver {
    pub fn new(vertex_count: usize, edges: &[(usize, usize)], dirichlet: &[bool]) -> Result<Self> {
        if dirichlet.len() != vertex_count {
            return Err(Error::InvalidArgument("one Dirichlet flag per vertex".into()));
        }
        if edges.len() + 1 != vertex_count {
            return Err(Error::InvalidArgument("not a tree".into()));
        }
        let root = dirichlet
            .iter()
            .position(|&d| d)
            .ok_or(Error::NoDirichletVertex)?;
        let mut adj = vec![Vec::new(); vertex_count];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= vertex_count || b >= vertex_count || a == b {
                return Err(Error::InvalidArgument(format!("bad edge {a}-{b}")));
            }
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        let mut parent = vec![None; vertex_count];
        let mut seen = vec![false; vertex_count];
        let mut order = vec![root];
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(w, k) in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((v, k));
                    order.push(w);
                }
            }
        }
        if order.len() != vertex_count {
            return Err(Error::DisconnectedGraph);
        }
        Ok(TreeSolver {
            edges: edges.to_vec(),
            dirichlet: dirichlet.to_vec(),
            order,
            parent,
        })
    }

    pub fn from_graph(g: &MetricGraph) -> Result<Self> {
        let edges: Vec<_> = g.edges().iter().map(|e| (e.from, e.to)).collect();
        let dirichlet: Vec<_> = g.vertices().iter().map(|v| v.dirichlet).collect();
        TreeSolver::new(g.vertex_count(), &edges, &dirichlet)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Energy only.
    pub fn energy(&self, lengths: &[f64]) -> f64 {
        self.evaluate(lengths).energy
    }

    pub fn evaluate(&self, lengths: &[f64]) -> TreeEvaluation {
        let mut ws = TreeWorkspace::default();
        let energy = self.evaluate_with(lengths, &mut ws);
        TreeEvaluation {
            energy,
            vertex_values: ws.values,
            gradient: ws.gradient,
        }
    }

    /// Like [`TreeSolver::evaluate`], reusing the buffers in `ws`; vertex
    /// values and the gradient are left in `ws`.
    pub fn evaluate_with(&self, lengths: &[f64], ws: &mut TreeWorkspace) -> f64 {
        let n = self.order.len();
        debug_assert_eq!(lengths.len(), self.edges.len());
        ws.reset(n, self.edges.len());
        // Children respond to their parent's value U as `a - b U`
        // (derivative leaving the parent along the connecting edge).
        for &v in self.order.iter().rev() {
            let Some((p, k)) = self.parent[v] else {
                continue;
            };
            let l = lengths[k];
            let (a, b) = if self.dirichlet[v] {
                (0.5 * l, 1.0 / l)
            } else {
                let d = 1.0 + ws.sum_b[v] * l;
                (0.5 * l + (0.5 * l + ws.sum_a[v]) / d, ws.sum_b[v] / d)
            };
            ws.sum_a[p] += a;
            ws.sum_b[p] += b;
        }

        for &v in &self.order {
            let Some((p, k)) = self.parent[v] else {
                continue;
            };
            if self.dirichlet[v] {
                continue;
            }
            let l = lengths[k];
            ws.values[v] =
                (ws.values[p] + 0.5 * l * l + ws.sum_a[v] * l) / (1.0 + ws.sum_b[v] * l);
        }

        let mut integral = 0.0;
        for (k, (&(a, b), &l)) in self.edges.iter().zip(lengths).enumerate() {
            let (ua, ub) = (ws.values[a], ws.values[b]);
            integral += edge_integral(l, ua, ub);
            let s = (ub - ua) / l;
            ws.gradient[k] = -0.5 * s * s - 0.5 * (ua + ub) - 0.125 * l * l;
        }
        -0.5 * integral
    }
}

/// Scratch buffers for [`TreeSolver::evaluate_with`].
#[derive(Debug, Clone, Default)]
pub struct TreeWorkspace {
    sum_a: Vec<f64>,
    sum_b: Vec<f64>,
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl TreeWorkspace {
    fn reset(&mut self, vertices: usize, edges: usize) {
        for buf in [&mut self.sum_a, &mut self.sum_b, &mut self.values] {
            buf.clear();
            buf.resize(vertices, 0.0);
        }
        self.gradient.clear();
        self.gradient.resize(edges, 0.0);
    }
}
