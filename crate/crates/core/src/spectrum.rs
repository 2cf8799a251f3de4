//! Laplacian eigenvalues on metric graphs by piecewise-linear finite elements.
//!
//! Every edge of length `L` is split into `ceil(L / h)` equal elements; the
//! vertex nodes are shared between incident edges and the Dirichlet vertices
//! are removed. The `k` smallest eigenpairs of `K x = λ M x` (consistent mass)
//! are found by shift-inverted subspace iteration. Solves with `K - σM` reduce
//! to one tridiagonal solve per edge plus a small dense system on the vertex
//! values.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{EdgeFunction, GraphFunction};
use crate::graph::MetricGraph;
use crate::linalg::TridiagonalLu;

const MAX_ITERATIONS: usize = 1000;
const RITZ_TOLERANCE: f64 = 1e-13;
const START_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    /// `λ_1 ≤ ... ≤ λ_k`.
    pub eigenvalues: Vec<f64>,
    /// Requested mesh width; the actual width on each edge is `L / ceil(L/h)`.
    pub h: f64,
    /// Sampled at the mesh nodes, unit `L²` norm.
    pub eigenfunctions: Vec<GraphFunction>,
    /// True when the graph has no Dirichlet vertex (then `λ_1 = 0`).
    pub no_dirichlet: bool,
    pub iterations: usize,
}

/// Index of a mesh node in the reduced system, `None` for Dirichlet nodes.
type Node = Option<usize>;

struct Mesh {
    /// Unknown count; vertex unknowns come first.
    size: usize,
    vertex_unknowns: usize,
    /// Per edge: element width and the index of its first interior node.
    edges: Vec<EdgeMesh>,
}

#[derive(Clone, Copy)]
struct EdgeMesh {
    from: Node,
    to: Node,
    elements: usize,
    width: f64,
    first: usize,
}

impl EdgeMesh {
    fn interior(&self) -> usize {
        self.elements - 1
    }

    fn node(&self, j: usize) -> Node {
        if j == 0 {
            self.from
        } else if j == self.elements {
            self.to
        } else {
            Some(self.first + j - 1)
        }
    }
}

impl Mesh {
    fn new(g: &MetricGraph, h: f64) -> Result<Self> {
        let mut vertex_index = vec![None; g.vertex_count()];
        let mut next = 0;
        for (v, vert) in g.vertices().iter().enumerate() {
            if !vert.dirichlet {
                vertex_index[v] = Some(next);
                next += 1;
            }
        }
        let vertex_unknowns = next;
        let mut edges = Vec::with_capacity(g.edge_count());
        for (k, e) in g.edges().iter().enumerate() {
            let elements = (e.length / h).ceil() as usize;
            if elements < 3 {
                return Err(Error::MeshTooCoarse {
                    edge: k,
                    length: e.length,
                    h,
                });
            }
            edges.push(EdgeMesh {
                from: vertex_index[e.from],
                to: vertex_index[e.to],
                elements,
                width: e.length / elements as f64,
                first: next,
            });
            next += elements - 1;
        }
        Ok(Mesh {
            size: next,
            vertex_unknowns,
            edges,
        })
    }

    /// `y = (αK + βM) x`.
    fn apply(&self, alpha: f64, beta: f64, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for e in &self.edges {
            let diag = alpha / e.width + beta * e.width / 3.0;
            let off = -alpha / e.width + beta * e.width / 6.0;
            for j in 0..e.elements {
                let (a, b) = (e.node(j), e.node(j + 1));
                let xa = a.map_or(0.0, |i| x[i]);
                let xb = b.map_or(0.0, |i| x[i]);
                if let Some(i) = a {
                    y[i] += diag * xa + off * xb;
                }
                if let Some(i) = b {
                    y[i] += off * xa + diag * xb;
                }
            }
        }
    }
}

/// Factorization of `K - σM` exploiting the edge-chain structure.
struct ShiftedSolver<'a> {
    mesh: &'a Mesh,
    sigma: f64,
    chains: Vec<TridiagonalLu>,
    /// `T_e⁻¹` applied to the coupling columns of the `from` / `to` vertex.
    from_cols: Vec<Vec<f64>>,
    to_cols: Vec<Vec<f64>>,
    schur: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl<'a> ShiftedSolver<'a> {
    fn new(mesh: &'a Mesh, sigma: f64) -> Result<Self> {
        let m = mesh.vertex_unknowns;
        let mut schur = DMatrix::zeros(m, m);
        let mut chains = Vec::with_capacity(mesh.edges.len());
        let mut from_cols = Vec::with_capacity(mesh.edges.len());
        let mut to_cols = Vec::with_capacity(mesh.edges.len());
        for e in &mesh.edges {
            let diag = 1.0 / e.width - sigma * e.width / 3.0;
            let off = -1.0 / e.width - sigma * e.width / 6.0;
            let n = e.interior();
            let chain = TridiagonalLu::new(&vec![off; n - 1], &vec![2.0 * diag; n], &vec![off; n - 1])?;
            // vertex-vertex contributions of the two end elements
            for v in [e.from, e.to].into_iter().flatten() {
                schur[(v, v)] += diag;
            }
            let mut cf = vec![0.0; n];
            cf[0] = off;
            chain.solve_in_place(&mut cf);
            let mut ct = vec![0.0; n];
            ct[n - 1] = off;
            chain.solve_in_place(&mut ct);
            // S -= Bᵀ T⁻¹ B
            if let Some(a) = e.from {
                schur[(a, a)] -= off * cf[0];
                if let Some(b) = e.to {
                    schur[(a, b)] -= off * ct[0];
                    schur[(b, a)] -= off * cf[n - 1];
                }
            }
            if let Some(b) = e.to {
                schur[(b, b)] -= off * ct[n - 1];
            }
            chains.push(chain);
            from_cols.push(cf);
            to_cols.push(ct);
        }
        let chol = if m > 0 {
            Some(
                Cholesky::new(schur)
                    .ok_or(Error::SingularSystem { pivot: 0.0 })?,
            )
        } else {
            None
        };
        Ok(ShiftedSolver {
            mesh,
            sigma,
            chains,
            from_cols,
            to_cols,
            schur: chol,
        })
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let m = mesh.vertex_unknowns;
        let mut x = rhs.to_vec();
        let mut r_v = nalgebra::DVector::from_row_slice(&rhs[..m]);
        for (k, e) in mesh.edges.iter().enumerate() {
            let n = e.interior();
            let y = &mut x[e.first..e.first + n];
            self.chains[k].solve_in_place(y);
            let off = -1.0 / e.width - self.sigma * e.width / 6.0;
            if let Some(a) = e.from {
                r_v[a] -= off * y[0];
            }
            if let Some(b) = e.to {
                r_v[b] -= off * y[n - 1];
            }
        }
        let x_v = match &self.schur {
            Some(ch) => ch.solve(&r_v),
            None => r_v,
        };
        if !x_v.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularSystem { pivot: 0.0 });
        }
        x[..m].copy_from_slice(x_v.as_slice());
        for (k, e) in mesh.edges.iter().enumerate() {
            let n = e.interior();
            let (xa, xb) = (e.from.map_or(0.0, |i| x_v[i]), e.to.map_or(0.0, |i| x_v[i]));
            for j in 0..n {
                x[e.first + j] -= self.from_cols[k][j] * xa + self.to_cols[k][j] * xb;
            }
        }
        Ok(x)
    }
}

fn m_dot(mesh: &Mesh, a: &[f64], b: &[f64], scratch: &mut [f64]) -> f64 {
    mesh.apply(0.0, 1.0, b, scratch);
    a.iter().zip(scratch.iter()).map(|(x, y)| x * y).sum()
}

/// The `k` smallest eigenvalues of the Laplacian on `g` with Dirichlet
/// conditions at the Dirichlet vertices and Kirchhoff conditions elsewhere.
pub fn eigenvalues(g: &MetricGraph, k: usize, h: f64) -> Result<SpectrumReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("mesh width must be positive, got {h}")));
    }
    let mesh = Mesh::new(g, h)?;
    let n = mesh.size;
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "asked for {k} eigenvalues of a {n}-dimensional discretization"
        )));
    }
    let no_dirichlet = g.vertices().iter().all(|v| !v.dirichlet);
    let sigma = if no_dirichlet { -1.0 } else { 0.0 };
    let solver = ShiftedSolver::new(&mesh, sigma)?;
    let block = (2 * k).max(k + 8).min(n);

    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut x: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut scratch = vec![0.0; n];
    let mut previous = vec![f64::INFINITY; k];
    let mut ritz = Vec::new();
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let mut y = Vec::with_capacity(block);
        for col in &x {
            mesh.apply(0.0, 1.0, col, &mut scratch);
            y.push(solver.solve(&scratch)?);
        }
        m_orthonormalize(&mesh, &mut y, &mut scratch);
        let (values, vectors) = rayleigh_ritz(&mesh, &y, &mut scratch)?;
        x = vectors;
        ritz = values;
        let converged = ritz[..k]
            .iter()
            .zip(&previous)
            .all(|(a, b)| (a - b).abs() <= RITZ_TOLERANCE * a.abs().max(1.0));
        previous.copy_from_slice(&ritz[..k]);
        if converged && it >= 3 {
            break;
        }
        if it == MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                what: "subspace iteration".into(),
                residual: (ritz[k - 1] - previous[k - 1]).abs(),
            });
        }
    }

    let eigenfunctions = x[..k]
        .iter()
        .map(|v| to_graph_function(g, &mesh, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumReport {
        eigenvalues: ritz[..k].iter().map(|&l| l.max(0.0)).collect(),
        h,
        eigenfunctions,
        no_dirichlet,
        iterations,
    })
}

fn m_orthonormalize(mesh: &Mesh, cols: &mut [Vec<f64>], scratch: &mut [f64]) {
    for _pass in 0..2 {
        for i in 0..cols.len() {
            for j in 0..i {
                let (done, rest) = cols.split_at_mut(i);
                let proj = m_dot(mesh, &rest[0], &done[j], scratch);
                for (a, b) in rest[0].iter_mut().zip(&done[j]) {
                    *a -= proj * b;
                }
            }
            let norm = m_dot(mesh, &cols[i], &cols[i], scratch).sqrt();
            if norm > 0.0 {
                cols[i].iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// Ritz pairs of `K` on the span of M-orthonormal columns, ascending.
fn rayleigh_ritz(
    mesh: &Mesh,
    cols: &[Vec<f64>],
    scratch: &mut [f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = cols.len();
    let kc: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            mesh.apply(1.0, 0.0, c, scratch);
            scratch.to_vec()
        })
        .collect();
    let mut kr = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v: f64 = cols[i].iter().zip(&kc[j]).map(|(a, b)| a * b).sum();
            kr[(i, j)] = v;
            kr[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(kr);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = mesh.size;
    let mut values = Vec::with_capacity(p);
    let mut vectors = Vec::with_capacity(p);
    for &j in &order {
        values.push(eig.eigenvalues[j]);
        let mut v = vec![0.0; n];
        for (i, c) in cols.iter().enumerate() {
            let w = eig.eigenvectors[(i, j)];
            for (a, b) in v.iter_mut().zip(c) {
                *a += w * b;
            }
        }
        vectors.push(v);
    }
    Ok((values, vectors))
}

fn to_graph_function(g: &MetricGraph, mesh: &Mesh, v: &[f64]) -> Result<GraphFunction> {
    let largest = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    let sign = if largest < 0.0 { -1.0 } else { 1.0 };
    let pieces = mesh
        .edges
        .iter()
        .map(|e| {
            EdgeFunction::Samples(
                (0..=e.elements)
                    .map(|j| sign * e.node(j).map_or(0.0, |i| v[i]))
                    .collect(),
            )
        })
        .collect();
    GraphFunction::new(g, pieces)
}
