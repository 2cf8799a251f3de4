//! Metric graphs: validated data model, text format, intrinsic distance and
//! the immersion test that defines the admissible class for pinned problems.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Index of a vertex inside a [`MetricGraph`].
pub type VertexId = usize;

/// Number of random restarts used by [`MetricGraph::is_immersible`].
pub const IMMERSION_STARTS: usize = 32;
/// Acceptance threshold on the summed squared length violations.
pub const IMMERSION_TOLERANCE: f64 = 1e-9;
const IMMERSION_SEED: u64 = 0x1a2b_3c4d;
const IMMERSION_MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Vertex {
    pub label: String,
    pub dirichlet: bool,
    pub pin: Option<Vec<f64>>,
}

/// An edge parametrized by arc length from `from` (x = 0) to `to` (x = length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub length: f64,
}

impl Edge {
    /// The endpoint opposite to `v`.
    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.from {
            self.to
        } else {
            self.from
        }
    }
}

/// A connected combinatorial graph with positive edge lengths.
///
/// Parallel edges are allowed, self-loops are not. Pinned vertices carry a
/// point in `R^d` and must be Dirichlet vertices; all pins share one `d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    #[serde(skip)]
    incidence: Vec<Vec<usize>>,
}

impl MetricGraph {
    /// Validates the parts and builds the graph.
    pub fn new(vertices: Vec<Vertex>, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if seen.insert(v.label.as_str(), i).is_some() {
                return Err(Error::DuplicateVertex(v.label.clone()));
            }
        }
        let mut dim = None;
        for v in &vertices {
            if let Some(p) = &v.pin {
                if !v.dirichlet {
                    return Err(Error::PinOnNonDirichletVertex(v.label.clone()));
                }
                if p.is_empty() || p.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "pin of `{}` must have at least one finite coordinate",
                        v.label
                    )));
                }
                match dim {
                    None => dim = Some(p.len()),
                    Some(d) if d != p.len() => {
                        return Err(Error::PinDimensionMismatch {
                            expected: d,
                            found: p.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        let mut incidence = vec![Vec::new(); vertices.len()];
        for (k, e) in edges.iter().enumerate() {
            for end in [e.from, e.to] {
                if end >= vertices.len() {
                    return Err(Error::UnknownVertexReference(format!("#{end}")));
                }
            }
            if e.from == e.to {
                return Err(Error::SelfLoop(vertices[e.from].label.clone()));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(Error::NonpositiveLength {
                    edge: k,
                    length: e.length,
                });
            }
            incidence[e.from].push(k);
            incidence[e.to].push(k);
        }
        let g = MetricGraph {
            vertices,
            edges,
            incidence,
        };
        if !g.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        Ok(g)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Indices of the edges incident to `v`.
    pub fn incident_edges(&self, v: VertexId) -> &[usize] {
        &self.incidence[v]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incidence[v].len()
    }

    pub fn vertex_index(&self, label: &str) -> Result<VertexId> {
        self.vertices
            .iter()
            .position(|v| v.label == label)
            .ok_or_else(|| Error::UnknownVertexReference(label.to_string()))
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn dirichlet_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, v)| v.dirichlet)
            .map(|(i, _)| i)
    }

    /// Ambient dimension of the pins, if any vertex is pinned.
    pub fn pin_dimension(&self) -> Option<usize> {
        self.vertices
            .iter()
            .find_map(|v| v.pin.as_ref().map(|p| p.len()))
    }

    /// Same graph with edge lengths replaced.
    pub fn with_lengths(&self, lengths: &[f64]) -> Result<Self> {
        if lengths.len() != self.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} lengths, got {}",
                self.edges.len(),
                lengths.len()
            )));
        }
        let edges = self
            .edges
            .iter()
            .zip(lengths)
            .map(|(e, &length)| Edge { length, ..*e })
            .collect();
        MetricGraph::new(self.vertices.clone(), edges)
    }

    /// Same graph with the Dirichlet flag of `v` set.
    pub fn with_dirichlet(&self, v: VertexId) -> Result<Self> {
        if v >= self.vertices.len() {
            return Err(Error::UnknownVertexReference(format!("#{v}")));
        }
        let mut vertices = self.vertices.clone();
        vertices[v].dirichlet = true;
        MetricGraph::new(vertices, self.edges.clone())
    }

    fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &k in &self.incidence[v] {
                let w = self.edges[k].other(v);
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Intrinsic (geodesic) distance between two vertices.
    pub fn distance(&self, a: VertexId, b: VertexId) -> Result<f64> {
        let n = self.vertices.len();
        for v in [a, b] {
            if v >= n {
                return Err(Error::UnknownVertexReference(format!("#{v}")));
            }
        }
        Ok(self.distances_from(a)[b])
    }

    /// Dijkstra from `source` to every vertex.
    pub fn distances_from(&self, source: VertexId) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Item(f64, VertexId);
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist = vec![f64::INFINITY; self.vertices.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Item(0.0, source));
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &k in &self.incidence[v] {
                let e = &self.edges[k];
                let w = e.other(v);
                let nd = d + e.length;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Item(nd, w));
                }
            }
        }
        dist
    }

    pub fn stats(&self) -> GraphStats {
        let degrees: Vec<usize> = (0..self.vertices.len()).map(|v| self.degree(v)).collect();
        let leaves = |dirichlet: bool| {
            degrees
                .iter()
                .zip(&self.vertices)
                .filter(|(&d, v)| d == 1 && v.dirichlet == dirichlet)
                .count()
        };
        GraphStats {
            total_length: self.total_length(),
            is_tree: self.edges.len() + 1 == self.vertices.len(),
            dirichlet_leaves: leaves(true),
            neumann_leaves: leaves(false),
            degrees,
        }
    }

    /// Decides whether the graph admits an immersion into `R^dim` sending each
    /// pinned vertex to its pin.
    ///
    /// Each edge may be realized by any injective arc-length curve, so a
    /// placement `φ` of the vertices works iff `|φ(u) - φ(v)| <= l_uv` on every
    /// edge. Free positions are found by minimizing the summed squared
    /// violations from several seeded starts.
    pub fn is_immersible(&self, dim: usize) -> Result<ImmersionReport> {
        if dim == 0 {
            return Err(Error::InvalidArgument("ambient dimension must be >= 1".into()));
        }
        if let Some(d) = self.pin_dimension() {
            if d != dim {
                return Err(Error::PinDimensionMismatch {
                    expected: dim,
                    found: d,
                });
            }
        } else {
            return Ok(ImmersionReport {
                immersible: true,
                residual: 0.0,
                placement: vec![vec![0.0; dim]; self.vertices.len()],
                note: Some("no pinned vertices: the constraint is vacuous".into()),
            });
        }
        let problem = PlacementProblem::new(self, dim);
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut rng = ChaCha8Rng::seed_from_u64(IMMERSION_SEED);
        for start in 0..IMMERSION_STARTS {
            let x0 = problem.initial_guess(start, &mut rng);
            let (f, x) = problem.minimize(x0);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
            if f <= IMMERSION_TOLERANCE {
                break;
            }
        }
        let (residual, x) = best.expect("at least one start");
        Ok(ImmersionReport {
            immersible: residual <= IMMERSION_TOLERANCE,
            residual,
            placement: problem.placement(&x),
            note: None,
        })
    }

    /// Serializes to the line-oriented text format read by [`FromStr`].
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

/// Outcome of the immersion test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImmersionReport {
    pub immersible: bool,
    /// Summed squared length violations at the best placement found.
    pub residual: f64,
    /// Witness (or best) placement, one point per vertex.
    pub placement: Vec<Vec<f64>>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub total_length: f64,
    pub is_tree: bool,
    pub degrees: Vec<usize>,
    pub dirichlet_leaves: usize,
    /// Degree-one vertices without a Dirichlet condition.
    pub neumann_leaves: usize,
}

struct PlacementProblem<'a> {
    graph: &'a MetricGraph,
    dim: usize,
    /// Slot of each free vertex in the unknown vector, `None` for pins.
    slot: Vec<Option<usize>>,
    free: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    lipschitz: f64,
}

impl<'a> PlacementProblem<'a> {
    fn new(graph: &'a MetricGraph, dim: usize) -> Self {
        let mut slot = vec![None; graph.vertex_count()];
        let mut free = 0;
        for (v, vx) in graph.vertices.iter().enumerate() {
            if vx.pin.is_none() {
                slot[v] = Some(free);
                free += 1;
            }
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in graph.vertices.iter().filter_map(|v| v.pin.as_ref()) {
            for c in 0..dim {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let reach = graph.edges.iter().map(|e| e.length).fold(0.0, f64::max);
        for c in 0..dim {
            lo[c] -= reach;
            hi[c] += reach;
        }
        let max_degree = (0..graph.vertex_count())
            .map(|v| graph.degree(v))
            .max()
            .unwrap_or(1)
            .max(1);
        PlacementProblem {
            graph,
            dim,
            slot,
            free,
            lo,
            hi,
            lipschitz: 4.0 * max_degree as f64,
        }
    }

    fn point<'b>(&'b self, x: &'b [f64], v: VertexId) -> &'b [f64] {
        match self.slot[v] {
            Some(s) => &x[s * self.dim..(s + 1) * self.dim],
            None => self.graph.vertices[v].pin.as_deref().expect("pinned"),
        }
    }

    fn initial_guess(&self, start: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = vec![0.0; self.free * self.dim];
        if start == 0 {
            let pins: Vec<&Vec<f64>> = self
                .graph
                .vertices
                .iter()
                .filter_map(|v| v.pin.as_ref())
                .collect();
            for s in 0..self.free {
                for c in 0..self.dim {
                    x[s * self.dim + c] =
                        pins.iter().map(|p| p[c]).sum::<f64>() / pins.len() as f64;
                }
            }
        } else {
            for s in 0..self.free {
                for c in 0..self.dim {
                    x[s * self.dim + c] = rng.random_range(self.lo[c]..=self.hi[c]);
                }
            }
        }
        x
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut f = 0.0;
        for e in &self.graph.edges {
            let a = self.point(x, e.from);
            let b = self.point(x, e.to);
            let dist = a
                .iter()
                .zip(b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            let viol = dist - e.length;
            if viol <= 0.0 {
                continue;
            }
            f += viol * viol;
            let scale = 2.0 * viol / dist;
            for c in 0..self.dim {
                let g = scale * (a[c] - b[c]);
                if let Some(s) = self.slot[e.from] {
                    grad[s * self.dim + c] += g;
                }
                if let Some(s) = self.slot[e.to] {
                    grad[s * self.dim + c] -= g;
                }
            }
        }
        f
    }

    /// Accelerated gradient descent; the objective is convex and its gradient
    /// is `lipschitz`-Lipschitz.
    fn minimize(&self, mut x: Vec<f64>) -> (f64, Vec<f64>) {
        let n = x.len();
        let mut grad = vec![0.0; n];
        if n == 0 {
            return (self.value_and_gradient(&x, &mut grad), x);
        }
        let step = 1.0 / self.lipschitz;
        let mut y = x.clone();
        let mut x_prev = x.clone();
        let mut t = 1.0_f64;
        let mut best = (f64::INFINITY, x.clone());
        for _ in 0..IMMERSION_MAX_ITERS {
            let fy = self.value_and_gradient(&y, &mut grad);
            if fy < best.0 {
                best = (fy, y.clone());
            }
            if fy <= IMMERSION_TOLERANCE * 1e-6 {
                break;
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < 1e-15 {
                break;
            }
            for i in 0..n {
                x[i] = y[i] - step * grad[i];
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            for i in 0..n {
                y[i] = x[i] + momentum * (x[i] - x_prev[i]);
            }
            x_prev.copy_from_slice(&x);
            t = t_next;
        }
        let fx = self.value_and_gradient(&x, &mut grad);
        if fx < best.0 {
            best = (fx, x);
        }
        best
    }

    fn placement(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.graph.vertex_count())
            .map(|v| self.point(x, v).to_vec())
            .collect()
    }
}

/// Incremental construction with label-based edge references.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    vertices: Vec<Vertex>,
    pending: Vec<(String, String, f64)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(mut self, label: &str, dirichlet: bool) -> Self {
        self.vertices.push(Vertex {
            label: label.to_string(),
            dirichlet,
            pin: None,
        });
        self
    }

    pub fn pinned(mut self, label: &str, pin: &[f64]) -> Self {
        self.vertices.push(Vertex {
            label: label.to_string(),
            dirichlet: true,
            pin: Some(pin.to_vec()),
        });
        self
    }

    pub fn edge(mut self, a: &str, b: &str, length: f64) -> Self {
        self.pending.push((a.to_string(), b.to_string(), length));
        self
    }

    pub fn build(self) -> Result<MetricGraph> {
        let index: HashMap<&str, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.label.as_str(), i))
            .collect();
        let lookup = |l: &str| {
            index
                .get(l)
                .copied()
                .ok_or_else(|| Error::UnknownVertexReference(l.to_string()))
        };
        let mut edges = Vec::with_capacity(self.pending.len());
        for (a, b, length) in &self.pending {
            edges.push(Edge {
                from: lookup(a)?,
                to: lookup(b)?,
                length: *length,
            });
        }
        MetricGraph::new(self.vertices, edges)
    }
}

impl fmt::Display for MetricGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.vertices {
            write!(f, "vertex {}", v.label)?;
            if v.dirichlet {
                write!(f, " dirichlet")?;
            }
            if let Some(p) = &v.pin {
                write!(f, " pin")?;
                for c in p {
                    write!(f, " {c:?}")?;
                }
            }
            writeln!(f)?;
        }
        for e in &self.edges {
            writeln!(
                f,
                "edge {} {} {:?}",
                self.vertices[e.from].label, self.vertices[e.to].label, e.length
            )?;
        }
        Ok(())
    }
}

impl FromStr for MetricGraph {
    type Err = Error;

    /// Reads `vertex <id> [dirichlet] [pin x y ...]` and
    /// `edge <id> <id> <length>` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self> {
        let mut builder = GraphBuilder::new();
        let mut seen = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("");
            let mut tokens = content.split_whitespace();
            let Some(keyword) = tokens.next() else {
                continue;
            };
            let parse_err = |message: String| Error::Parse { line, message };
            match keyword {
                "vertex" => {
                    let label = tokens
                        .next()
                        .ok_or_else(|| parse_err("vertex needs an id".into()))?;
                    if seen.insert(label.to_string(), line).is_some() {
                        return Err(Error::DuplicateVertex(label.to_string()));
                    }
                    let mut dirichlet = false;
                    let mut pin = None;
                    while let Some(tok) = tokens.next() {
                        match tok {
                            "dirichlet" => dirichlet = true,
                            "pin" => {
                                let coords = tokens
                                    .by_ref()
                                    .map(|t| {
                                        t.parse::<f64>().map_err(|_| {
                                            parse_err(format!("bad coordinate `{t}`"))
                                        })
                                    })
                                    .collect::<Result<Vec<_>>>()?;
                                if coords.is_empty() {
                                    return Err(parse_err("pin needs coordinates".into()));
                                }
                                pin = Some(coords);
                            }
                            other => return Err(parse_err(format!("unexpected token `{other}`"))),
                        }
                    }
                    builder.vertices.push(Vertex {
                        label: label.to_string(),
                        dirichlet,
                        pin,
                    });
                }
                "edge" => {
                    let fields: Vec<&str> = tokens.collect();
                    let [a, b, len] = fields[..] else {
                        return Err(parse_err("edge needs two ids and a length".into()));
                    };
                    let length = len
                        .parse::<f64>()
                        .map_err(|_| parse_err(format!("bad length `{len}`")))?;
                    builder = builder.edge(a, b, length);
                }
                other => return Err(parse_err(format!("unknown directive `{other}`"))),
            }
        }
        builder.build()
    }
}
