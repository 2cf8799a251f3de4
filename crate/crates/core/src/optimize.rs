//! Length optimization of pinned tree templates under a total-length budget.
//!
//! For a fixed template the unknowns are the positions `P` of the Steiner
//! points and the edge lengths. A length vector is admissible when every edge
//! is at least as long as the straight distance between its placed endpoints,
//! so it is written as
//!
//! ```text
//! x = d(P) + r(P) w,   r(P) = l - Σ d_e(P),   w in the unit simplex,
//! ```
//!
//! where `d_e` is that distance (zero for the Neumann edge). Every feasible
//! `(P, w)` with `r ≥ 0` gives an admissible length vector with `Σ x = l`,
//! and every admissible vector arises this way. The torsion energy is
//! minimized over `(P, w)` by a spectral projected gradient method from many
//! seeded starts, followed by a golden-section polish of the best start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Edge, MetricGraph, Vertex};
use crate::linalg::{golden_section, project_to_simplex};
use crate::topology::{enumerate_topologies, shape_class, Role, Topology};
use crate::torsion::{solve_torsion, TreeSolver, TreeWorkspace};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_240_917;

/// Relative energy gap under which two templates count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Edges shorter than this fraction of the budget are contracted when the
/// optimal lengths are turned into a graph.
pub const CONTRACTION_TOLERANCE: f64 = 1e-10;

const HISTORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const STAGNATION_WINDOW: usize = 100;
const STAGNATION_GAIN: f64 = 1e-13;
const SCREEN_ITERATIONS: usize = 300;
const REFINED_STARTS: usize = 6;
const POLISH_SWEEPS: usize = 12;

/// Distinct points in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PinSet {
    points: Vec<Vec<f64>>,
}

impl PinSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("no pins".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("pins need at least one coordinate".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::PinDimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("pin coordinates must be finite".into()));
            }
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::InvalidArgument(format!(
                        "pins {} and {} coincide",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(PinSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The pin set with pin `i` moved to slot `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.len() {
            return Err(Error::InvalidArgument("permutation has the wrong size".into()));
        }
        let mut points = vec![Vec::new(); self.len()];
        for (i, &j) in perm.iter().enumerate() {
            if j >= self.len() || !points[j].is_empty() {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            points[j] = self.points[i].clone();
        }
        PinSet::new(points)
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.points {
            for b in &self.points {
                d = d.max(dist(a, b));
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerOptions {
    /// Random starts per template.
    pub starts: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient step is below this (sup norm).
    pub step_tolerance: f64,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            starts: 64,
            max_iterations: 5000,
            step_tolerance: 1e-10,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub starts: usize,
    /// Iterations of the start that produced the result.
    pub iterations: usize,
    /// Iterations summed over all starts (and templates, for [`optimize`]).
    pub total_iterations: usize,
    /// Norm of the projected gradient mapping at the result; minimum-norm
    /// subgradients are used where a Steiner point sits on a neighbour.
    pub first_order_residual: f64,
    /// Energy found by the search before the graph was built.
    pub search_energy: f64,
    /// Shortest admissible total length for the template.
    pub minimal_length: f64,
    /// Templates tried and templates feasible for the budget.
    pub templates: usize,
    pub feasible_templates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedGraph {
    pub topology: Topology,
    pub budget: f64,
    /// One length per template edge; sums to the budget.
    pub lengths: Vec<f64>,
    /// The template with these lengths, degenerate edges contracted.
    pub graph: MetricGraph,
    /// Torsion energy of `graph`.
    pub energy: f64,
    /// Witness placement of the template vertices; `None` for the Neumann
    /// leaf, which is unconstrained.
    pub placement: Vec<Option<Vec<f64>>>,
    /// The same placement for the vertices of `graph`.
    pub vertex_placement: Vec<Option<Vec<f64>>>,
    pub diagnostics: Diagnostics,
    /// Pin-blind shape of `graph` (see [`shape_class`]).
    pub shape: String,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
struct State {
    p: Vec<f64>,
    w: Vec<f64>,
}

struct Workspace {
    tree: TreeWorkspace,
    d: Vec<f64>,
    x: Vec<f64>,
    grad_p: Vec<f64>,
    grad_w: Vec<f64>,
}

/// One template with fixed pins and budget.
struct LengthProblem<'a> {
    topology: &'a Topology,
    pins: &'a PinSet,
    budget: f64,
    solver: TreeSolver,
    dim: usize,
    /// Edge is subject to the distance constraint (not the Neumann edge).
    geometric: Vec<bool>,
    /// Position of each Steiner vertex inside `P`.
    slot: Vec<Option<usize>>,
    floor: f64,
}

impl<'a> LengthProblem<'a> {
    fn new(topology: &'a Topology, pins: &'a PinSet, budget: f64) -> Result<Self> {
        if topology.pin_count() != pins.len() {
            return Err(Error::InvalidArgument(format!(
                "template has {} pins, {} given",
                topology.pin_count(),
                pins.len()
            )));
        }
        let dirichlet: Vec<bool> = topology.roles.iter().map(|r| r.is_pin()).collect();
        let solver = TreeSolver::new(topology.vertex_count(), &topology.edges, &dirichlet)?;
        let neumann = topology.neumann();
        let geometric = topology
            .edges
            .iter()
            .map(|&(a, b)| Some(a) != neumann && Some(b) != neumann)
            .collect();
        let mut slot = vec![None; topology.vertex_count()];
        let mut next = 0;
        for (v, r) in topology.roles.iter().enumerate() {
            if *r == Role::Steiner {
                slot[v] = Some(next);
                next += 1;
            }
        }
        Ok(LengthProblem {
            topology,
            pins,
            budget,
            solver,
            dim: pins.dim(),
            geometric,
            slot,
            floor: 1e-12 * budget.max(1.0),
        })
    }

    fn neumann_edge(&self) -> Option<usize> {
        self.geometric.iter().position(|g| !g)
    }

    /// Moves the attachment point of the Neumann edge `k` onto the segment
    /// between its two geometric neighbours, when it subdivides an edge.
    fn straighten(&self, p: &mut [f64], k: usize) {
        let (a, b) = self.topology.edges[k];
        let x = if self.topology.roles[a] == Role::Neumann { b } else { a };
        let Some(s) = self.slot[x] else { return };
        let ends: Vec<usize> = self
            .topology
            .edges
            .iter()
            .zip(&self.geometric)
            .filter(|&(&(u, v), &g)| g && (u == x || v == x))
            .map(|(&(u, v), _)| if u == x { v } else { u })
            .collect();
        if ends.len() != 2 {
            return;
        }
        let from = self.position(p, ends[0]).to_vec();
        let to = self.position(p, ends[1]).to_vec();
        let here = &p[s * self.dim..(s + 1) * self.dim];
        let (mut dot, mut len2) = (0.0, 0.0);
        for i in 0..self.dim {
            dot += (here[i] - from[i]) * (to[i] - from[i]);
            len2 += (to[i] - from[i]).powi(2);
        }
        if len2 == 0.0 {
            return;
        }
        let t = (dot / len2).clamp(0.0, 1.0);
        for i in 0..self.dim {
            p[s * self.dim + i] = from[i] + t * (to[i] - from[i]);
        }
    }

    fn steiner_count(&self) -> usize {
        self.slot.iter().flatten().count()
    }

    fn edge_count(&self) -> usize {
        self.topology.edges.len()
    }

    fn position<'s>(&'s self, p: &'s [f64], v: usize) -> &'s [f64] {
        match self.topology.roles[v] {
            Role::Pin(i) => &self.pins.points[i],
            _ => {
                let s = self.slot[v].expect("placed vertex");
                &p[s * self.dim..(s + 1) * self.dim]
            }
        }
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            tree: TreeWorkspace::default(),
            d: vec![0.0; self.edge_count()],
            x: vec![0.0; self.edge_count()],
            grad_p: vec![0.0; self.steiner_count() * self.dim],
            grad_w: vec![0.0; self.edge_count()],
        }
    }

    fn distances(&self, p: &[f64], d: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (k, &(a, b)) in self.topology.edges.iter().enumerate() {
            d[k] = if self.geometric[k] {
                dist(self.position(p, a), self.position(p, b))
            } else {
                0.0
            };
            total += d[k];
        }
        total
    }

    fn slack(&self, p: &[f64], ws: &mut Workspace) -> f64 {
        self.budget - self.distances(p, &mut ws.d)
    }

    /// Energy at `z`, or `None` when the placement uses more than the budget.
    fn value(&self, z: &State, ws: &mut Workspace) -> Option<f64> {
        let r = self.slack(&z.p, ws);
        if r < -self.slack_tolerance() {
            return None;
        }
        let r = r.max(0.0);
        for k in 0..self.edge_count() {
            ws.x[k] = (ws.d[k] + r * z.w[k]).max(self.floor);
        }
        Some(self.solver.evaluate_with(&ws.x, &mut ws.tree))
    }

    /// Energy and gradient (left in `ws.grad_p`, `ws.grad_w`).
    fn value_grad(&self, z: &State, ws: &mut Workspace) -> Option<f64> {
        let e = self.value(z, ws)?;
        let r = (self.budget - ws.d.iter().sum::<f64>()).max(0.0);
        let g = &ws.tree.gradient;
        let gbar: f64 = g.iter().zip(&z.w).map(|(a, b)| a * b).sum();
        for k in 0..self.edge_count() {
            ws.grad_w[k] = r * g[k];
        }
        ws.grad_p.iter_mut().for_each(|v| *v = 0.0);
        for (k, &(a, b)) in self.topology.edges.iter().enumerate() {
            if !self.geometric[k] || ws.d[k] == 0.0 {
                continue;
            }
            let coef = (g[k] - gbar) / ws.d[k];
            for (v, sign) in [(a, 1.0), (b, -1.0)] {
                if let Some(s) = self.slot[v] {
                    let (pa, pb) = (self.position(&z.p, a), self.position(&z.p, b));
                    for i in 0..self.dim {
                        ws.grad_p[s * self.dim + i] += sign * coef * (pa[i] - pb[i]);
                    }
                }
            }
        }
        Some(e)
    }

    /// Placement minimizing the total straight length, and that length.
    fn anchor(&self) -> (Vec<f64>, f64) {
        let s = self.steiner_count();
        let dim = self.dim;
        let mut p = vec![0.0; s * dim];
        if s == 0 {
            let mut d = vec![0.0; self.edge_count()];
            let total = self.distances(&p, &mut d);
            return (p, total);
        }
        let k = self.pins.len() as f64;
        let centroid: Vec<f64> = (0..dim)
            .map(|i| self.pins.points.iter().map(|q| q[i]).sum::<f64>() / k)
            .collect();
        for j in 0..s {
            p[j * dim..(j + 1) * dim].copy_from_slice(&centroid);
        }
        // neighbours of each Steiner vertex along geometric edges
        let mut nbrs = vec![Vec::new(); self.topology.vertex_count()];
        for (e, &(a, b)) in self.topology.edges.iter().enumerate() {
            if self.geometric[e] {
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        let scale = self.pins.diameter().max(1e-300);
        let mut eps = 1e-2 * scale;
        // smoothed Weiszfeld sweeps with a shrinking smoothing radius
        while eps > 1e-15 * scale {
            for _ in 0..200 {
                let mut moved: f64 = 0.0;
                for v in 0..self.topology.vertex_count() {
                    let Some(j) = self.slot[v] else { continue };
                    let mut num = vec![0.0; dim];
                    let mut den = 0.0;
                    for &u in &nbrs[v] {
                        let q = self.position(&p, u).to_vec();
                        let d = dist(&q, &p[j * dim..(j + 1) * dim]);
                        let wgt = 1.0 / (d * d + eps * eps).sqrt();
                        den += wgt;
                        for i in 0..dim {
                            num[i] += wgt * q[i];
                        }
                    }
                    for i in 0..dim {
                        let new = num[i] / den;
                        moved = moved.max((new - p[j * dim + i]).abs());
                        p[j * dim + i] = new;
                    }
                }
                if moved < 1e-3 * eps {
                    break;
                }
            }
            eps *= 0.1;
        }
        let mut d = vec![0.0; self.edge_count()];
        let total = self.distances(&p, &mut d);
        (p, total)
    }

    /// Rounding allowance on the budget constraint.
    fn slack_tolerance(&self) -> f64 {
        1e-13 * self.budget
    }

    /// Gradient of `Σ d_e(P)` with respect to `P`, using the distances in `d`.
    fn constraint_gradient(&self, p: &[f64], d: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, &(a, b)) in self.topology.edges.iter().enumerate() {
            if !self.geometric[k] || d[k] == 0.0 {
                continue;
            }
            let (pa, pb) = (self.position(p, a), self.position(p, b));
            for (v, sign) in [(a, 1.0), (b, -1.0)] {
                if let Some(s) = self.slot[v] {
                    for i in 0..self.dim {
                        out[s * self.dim + i] += sign * (pa[i] - pb[i]) / d[k];
                    }
                }
            }
        }
    }

    /// Moves `p` back onto `Σ d_e = budget` along the constraint normal.
    fn restore(&self, p: &mut [f64], ws: &mut Workspace) -> bool {
        let mut normal = vec![0.0; p.len()];
        let excess = -self.slack(p, ws);
        if excess <= 0.0 {
            return true;
        }
        self.constraint_gradient(p, &ws.d, &mut normal);
        let nn: f64 = normal.iter().map(|v| v * v).sum();
        if nn == 0.0 {
            return false;
        }
        let base = p.to_vec();
        let mut t = 0.0;
        for _ in 0..50 {
            let excess = -self.slack(p, ws);
            if excess <= 0.0 && excess >= -self.slack_tolerance() {
                return true;
            }
            let mut grad = vec![0.0; p.len()];
            self.constraint_gradient(p, &ws.d, &mut grad);
            let rate: f64 = grad.iter().zip(&normal).map(|(a, b)| a * b).sum();
            if rate <= 0.0 {
                return false;
            }
            t += excess / rate;
            for i in 0..p.len() {
                p[i] = base[i] - t * normal[i];
            }
        }
        self.slack(p, ws) >= -self.slack_tolerance()
    }

    /// Sup norm of the unit-step projected gradient mapping, with the budget
    /// multiplier when the slack is exhausted.
    fn stationarity(&self, z: &State, gp: &[f64], gw: &[f64], ws: &mut Workspace) -> f64 {
        let mut target: Vec<f64> = z.w.iter().zip(gw).map(|(a, g)| a - g).collect();
        project_to_simplex(&mut target, 1.0);
        let w = target
            .iter()
            .zip(&z.w)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if gp.is_empty() {
            return w;
        }
        let r = self.slack(&z.p, ws);
        let mut g = gp.to_vec();
        if r <= 1e-12 * self.budget {
            let mut c = vec![0.0; gp.len()];
            self.constraint_gradient(&z.p, &ws.d, &mut c);
            let cc: f64 = c.iter().map(|v| v * v).sum();
            if cc > 0.0 {
                let mu = (-gp.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / cc).max(0.0);
                for (a, b) in g.iter_mut().zip(&c) {
                    *a += mu * b;
                }
            }
        }
        g.iter().fold(w, |m, v| m.max(v.abs()))
    }

    /// Spectral projected gradient along the projection arc: the simplex
    /// weights are projected exactly, placements that overspend the budget
    /// are pulled back along the constraint normal. Nonmonotone Armijo test
    /// on the actual displacement. Returns the final state, its energy and
    /// the iteration count.
    fn descend(&self, mut z: State, options: &OptimizerOptions, ws: &mut Workspace) -> (State, f64, usize) {
        let mut f = self.value_grad(&z, ws).expect("starts are feasible");
        let mut gp = ws.grad_p.clone();
        let mut gw = ws.grad_w.clone();
        let mut history = vec![f];
        let mut alpha = 1.0;
        let mut best_recent = f;
        let mut last_progress = 0;
        let mut iterations = 0;
        let mut trial = z.clone();
        for it in 0..options.max_iterations {
            iterations = it + 1;
            if self.stationarity(&z, &gp, &gw, ws) <= options.step_tolerance {
                break;
            }
            let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda * alpha > 1e-18 {
                let step = lambda * alpha;
                for i in 0..z.p.len() {
                    trial.p[i] = z.p[i] - step * gp[i];
                }
                for i in 0..z.w.len() {
                    trial.w[i] = z.w[i] - step * gw[i];
                }
                project_to_simplex(&mut trial.w, 1.0);
                if self.restore(&mut trial.p, ws) {
                    let mut slope = 0.0;
                    for i in 0..z.p.len() {
                        slope += (trial.p[i] - z.p[i]) * gp[i];
                    }
                    for i in 0..z.w.len() {
                        slope += (trial.w[i] - z.w[i]) * gw[i];
                    }
                    if slope < 0.0 {
                        if let Some(ft) = self.value(&trial, ws) {
                            if ft <= reference + ARMIJO * slope {
                                accepted = true;
                                break;
                            }
                        }
                    }
                }
                lambda *= 0.25;
            }
            if !accepted {
                break;
            }
            let f_new = self.value_grad(&trial, ws).expect("accepted point is feasible");
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..z.p.len() {
                let s = trial.p[i] - z.p[i];
                ss += s * s;
                sy += s * (ws.grad_p[i] - gp[i]);
            }
            for i in 0..z.w.len() {
                let s = trial.w[i] - z.w[i];
                ss += s * s;
                sy += s * (ws.grad_w[i] - gw[i]);
            }
            alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e6) } else { (10.0 * alpha).min(1e6) };
            std::mem::swap(&mut z, &mut trial);
            gp.copy_from_slice(&ws.grad_p);
            gw.copy_from_slice(&ws.grad_w);
            f = f_new;
            history.push(f);
            if history.len() > HISTORY {
                history.remove(0);
            }
            if f < best_recent - STAGNATION_GAIN * f.abs().max(1.0) {
                best_recent = f;
                last_progress = it;
            } else if it - last_progress > STAGNATION_WINDOW {
                break;
            }
        }
        (z, f, iterations)
    }

    /// Descends from `z`. A vanishing Neumann edge leaves its attachment
    /// point free to sit anywhere along a bent edge, a degenerate critical
    /// point, so that case is retried with the attachment point pulled straight
    /// and all the slack on the Neumann edge.
    fn descend_with_retry(
        &self,
        z: State,
        options: &OptimizerOptions,
        ws: &mut Workspace,
    ) -> Vec<(State, f64, usize)> {
        let (z, f, it) = self.descend(z, options, ws);
        let mut out = Vec::with_capacity(2);
        if let Some(k) = self.neumann_edge() {
            if self.slack(&z.p, ws) * z.w[k] < 1e-6 * self.budget {
                let mut w = vec![0.0; z.w.len()];
                w[k] = 1.0;
                let mut p = z.p.clone();
                self.straighten(&mut p, k);
                if self.restore(&mut p, ws) {
                    out.push(self.descend(State { p, w }, options, ws));
                }
            }
        }
        out.push((z, f, it));
        out
    }

    /// Coordinate-wise golden-section polish: mass transfers between pairs of
    /// simplex weights, then each Steiner coordinate.
    fn polish(&self, mut z: State, mut f: f64, ws: &mut Workspace) -> (State, f64) {
        let m = z.w.len();
        let scale = self.pins.diameter().max(1e-300);
        for _ in 0..POLISH_SWEEPS {
            let start = f;
            for i in 0..m {
                for j in (i + 1)..m {
                    let (wi, wj) = (z.w[i], z.w[j]);
                    if wi + wj <= 0.0 {
                        continue;
                    }
                    let mut trial = z.clone();
                    let (t, ft) = golden_section(
                        |t| {
                            trial.w[i] = wi + t;
                            trial.w[j] = wj - t;
                            self.value(&trial, ws).unwrap_or(f64::INFINITY)
                        },
                        -wi,
                        wj,
                        1e-13,
                        200,
                    );
                    if ft < f {
                        z.w[i] = wi + t;
                        z.w[j] = wj - t;
                        f = ft;
                    }
                }
            }
            let radius = 1e-3 * scale;
            for c in 0..z.p.len() {
                let base = z.p[c];
                let mut trial = z.clone();
                let (t, ft) = golden_section(
                    |t| {
                        trial.p.copy_from_slice(&z.p);
                        trial.p[c] = base + t;
                        if !self.restore(&mut trial.p, ws) {
                            return f64::INFINITY;
                        }
                        self.value(&trial, ws).unwrap_or(f64::INFINITY)
                    },
                    -radius,
                    radius,
                    1e-14 * scale,
                    200,
                );
                if ft < f {
                    let mut p = z.p.clone();
                    p[c] = base + t;
                    if self.restore(&mut p, ws) {
                        z.p = p;
                        f = ft;
                    }
                }
            }
            if start - f <= 1e-16 * f.abs().max(1.0) {
                break;
            }
        }
        (z, f)
    }

    /// Sup norm of the projected gradient mapping (unit step), with a KKT
    /// multiplier for the budget when the slack is exhausted and
    /// minimum-norm subgradients at coincident vertices.
    fn first_order_residual(&self, z: &State, ws: &mut Workspace) -> f64 {
        let Some(_) = self.value_grad(z, ws) else {
            return f64::INFINITY;
        };
        let mut target = z.w.clone();
        for (a, g) in target.iter_mut().zip(&ws.grad_w) {
            *a -= g;
        }
        project_to_simplex(&mut target, 1.0);
        let mut res = target
            .iter()
            .zip(&z.w)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if z.p.is_empty() {
            return res;
        }

        let dim = self.dim;
        let r = self.budget - ws.d.iter().sum::<f64>();
        let g = ws.tree.gradient.clone();
        let gbar: f64 = g.iter().zip(&z.w).map(|(a, b)| a * b).sum();
        let kink = 1e-9 * self.pins.diameter();
        // smooth part, budget-constraint gradient and kink radii per vertex
        let s = self.steiner_count();
        let mut smooth = vec![0.0; s * dim];
        let mut constraint = vec![0.0; s * dim];
        let mut radius = vec![0.0; s];
        for (k, &(a, b)) in self.topology.edges.iter().enumerate() {
            if !self.geometric[k] {
                continue;
            }
            let coef = g[k] - gbar;
            let (pa, pb) = (self.position(&z.p, a), self.position(&z.p, b));
            for (v, sign) in [(a, 1.0), (b, -1.0)] {
                let Some(j) = self.slot[v] else { continue };
                if ws.d[k] <= kink {
                    radius[j] += coef.abs();
                    continue;
                }
                for i in 0..dim {
                    let u = sign * (pa[i] - pb[i]) / ws.d[k];
                    smooth[j * dim + i] += coef * u;
                    constraint[j * dim + i] += u;
                }
            }
        }
        let mut grad = smooth.clone();
        if r <= 1e-12 * self.budget {
            let cc: f64 = constraint.iter().map(|c| c * c).sum();
            let gc: f64 = smooth.iter().zip(&constraint).map(|(a, b)| a * b).sum();
            if cc > 0.0 {
                let mu = (-gc / cc).max(0.0);
                for (a, c) in grad.iter_mut().zip(&constraint) {
                    *a += mu * c;
                }
            }
        }
        for j in 0..s {
            let v = &grad[j * dim..(j + 1) * dim];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            res = res.max((norm - radius[j]).max(0.0));
        }
        res
    }

    fn random_start(&self, rng: &mut ChaCha8Rng, anchor: &[f64], ws: &mut Workspace) -> State {
        let m = self.edge_count();
        let mut w: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let spread = 0.5 * self.pins.diameter();
        let target: Vec<f64> = anchor
            .iter()
            .map(|a| a + spread * rng.random_range(-1.0..1.0))
            .collect();
        let mut theta = 1.0;
        let mut p = target.clone();
        loop {
            for i in 0..p.len() {
                p[i] = anchor[i] + theta * (target[i] - anchor[i]);
            }
            if self.slack(&p, ws) >= 0.0 || theta == 0.0 {
                break;
            }
            theta = if theta < 1e-12 { 0.0 } else { theta * 0.5 };
        }
        State { p, w }
    }
}

/// Search result for one template before the graph is built.
struct TemplateResult {
    state: State,
    energy: f64,
    lengths: Vec<f64>,
    iterations: usize,
    total_iterations: usize,
    residual: f64,
    minimal_length: f64,
    starts: usize,
}

fn search_template(
    topology: &Topology,
    pins: &PinSet,
    budget: f64,
    options: &OptimizerOptions,
    seed: u64,
) -> Result<TemplateResult> {
    let problem = LengthProblem::new(topology, pins, budget)?;
    let (anchor, minimal_length) = problem.anchor();
    if minimal_length > budget {
        return Err(Error::InfeasibleBudget {
            budget,
            minimal: minimal_length,
        });
    }
    let mut ws = problem.workspace();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = problem.edge_count();
    let mut total_iterations = 0;
    let starts = options.starts.max(1);
    let screen = OptimizerOptions {
        max_iterations: options.max_iterations.min(SCREEN_ITERATIONS),
        ..options.clone()
    };
    // Short descents from every start, then full descents from the best few.
    let mut screened = Vec::with_capacity(2 * starts);
    for start in 0..starts {
        let z = if start == 0 {
            State {
                p: anchor.clone(),
                w: vec![1.0 / m as f64; m],
            }
        } else {
            problem.random_start(&mut rng, &anchor, &mut ws)
        };
        for (z, f, it) in problem.descend_with_retry(z, &screen, &mut ws) {
            total_iterations += it;
            screened.push((z, f));
        }
    }
    screened.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best: Option<(State, f64, usize)> = None;
    for (z, _) in screened.into_iter().take(REFINED_STARTS) {
        for (z, f, it) in problem.descend_with_retry(z, options, &mut ws) {
            total_iterations += it;
            if best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((z, f, it));
            }
        }
    }
    let (z, f, iterations) = best.expect("at least one start");
    let (z, energy) = problem.polish(z, f, &mut ws);
    let residual = problem.first_order_residual(&z, &mut ws);
    problem.value(&z, &mut ws);
    let lengths = lengths_on_budget(&ws.x, &ws.d, budget, &z.w);
    Ok(TemplateResult {
        state: z,
        energy,
        lengths,
        iterations,
        total_iterations,
        residual,
        minimal_length,
        starts,
    })
}

/// Lengths `d + r w` with the rounding error pushed into the largest slack
/// entry so that the sum is the budget.
fn lengths_on_budget(x: &[f64], d: &[f64], budget: f64, w: &[f64]) -> Vec<f64> {
    let mut lengths: Vec<f64> = x
        .iter()
        .zip(d)
        .zip(w)
        .map(|((&x, &d), &w)| if w == 0.0 { d } else { x })
        .collect();
    let excess = lengths.iter().sum::<f64>() - budget;
    let k = (0..lengths.len())
        .max_by(|&a, &b| lengths[a].total_cmp(&lengths[b]))
        .expect("nonempty");
    lengths[k] -= excess;
    lengths
}

fn vertex_label(role: Role, steiner_index: usize) -> String {
    match role {
        Role::Pin(i) => format!("p{}", i + 1),
        Role::Steiner => format!("s{}", steiner_index + 1),
        Role::Neumann => "n".into(),
    }
}

/// Builds the metric graph for `lengths`, contracting edges shorter than
/// `CONTRACTION_TOLERANCE · budget` and giving their length to the Neumann
/// edge (or the longest edge when there is none).
pub fn materialize(
    topology: &Topology,
    pins: &PinSet,
    lengths: &[f64],
    budget: f64,
) -> Result<MetricGraph> {
    Ok(contract(topology, pins, lengths, budget)?.0)
}

/// [`materialize`], plus the graph vertex each template vertex ended up in.
fn contract(
    topology: &Topology,
    pins: &PinSet,
    lengths: &[f64],
    budget: f64,
) -> Result<(MetricGraph, Vec<usize>)> {
    let n = topology.vertex_count();
    let tol = CONTRACTION_TOLERANCE * budget;
    // merge endpoints of short edges; pins absorb free vertices
    let mut rep: Vec<usize> = (0..n).collect();
    fn find(rep: &mut [usize], mut v: usize) -> usize {
        while rep[v] != v {
            rep[v] = rep[rep[v]];
            v = rep[v];
        }
        v
    }
    let mut lost = 0.0;
    let mut short = vec![false; lengths.len()];
    for (k, &(a, b)) in topology.edges.iter().enumerate() {
        if lengths[k] > tol {
            continue;
        }
        let (ra, rb) = (find(&mut rep, a), find(&mut rep, b));
        // never merge two pins (the edge between them cannot be short)
        if topology.roles[ra].is_pin() && topology.roles[rb].is_pin() {
            continue;
        }
        short[k] = true;
        lost += lengths[k];
        if topology.roles[ra].is_pin() || (topology.roles[rb] == Role::Neumann) {
            rep[rb] = ra;
        } else {
            rep[ra] = rb;
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut vertices = Vec::new();
    let mut steiner = 0;
    for v in 0..n {
        if find(&mut rep, v) != v {
            continue;
        }
        let role = topology.roles[v];
        let label = vertex_label(role, steiner);
        if role == Role::Steiner {
            steiner += 1;
        }
        index[v] = vertices.len();
        vertices.push(match role {
            Role::Pin(i) => Vertex {
                label,
                dirichlet: true,
                pin: Some(pins.points[i].clone()),
            },
            _ => Vertex {
                label,
                dirichlet: false,
                pin: None,
            },
        });
    }
    let mut edges = Vec::new();
    for (k, &(a, b)) in topology.edges.iter().enumerate() {
        if short[k] {
            continue;
        }
        let (ra, rb) = (find(&mut rep, a), find(&mut rep, b));
        edges.push(Edge {
            from: index[ra],
            to: index[rb],
            length: lengths[k],
        });
    }
    if lost > 0.0 && !edges.is_empty() {
        let neumann = vertices.iter().position(|v| v.label == "n");
        let target = edges
            .iter()
            .position(|e| Some(e.from) == neumann || Some(e.to) == neumann)
            .unwrap_or_else(|| {
                (0..edges.len())
                    .max_by(|&a, &b| edges[a].length.total_cmp(&edges[b].length))
                    .expect("nonempty")
            });
        edges[target].length += lost;
    }
    let image = (0..n).map(|v| index[find(&mut rep, v)]).collect();
    Ok((MetricGraph::new(vertices, edges)?, image))
}

fn finish(
    topology: &Topology,
    pins: &PinSet,
    budget: f64,
    r: TemplateResult,
    templates: usize,
    feasible_templates: usize,
    total_iterations: usize,
) -> Result<OptimizedGraph> {
    let (graph, image) = contract(topology, pins, &r.lengths, budget)?;
    let energy = solve_torsion(&graph)?.energy;
    let dim = pins.dim();
    let mut steiner = 0;
    let placement = topology
        .roles
        .iter()
        .map(|role| match role {
            Role::Pin(i) => Some(pins.points[*i].clone()),
            Role::Steiner => {
                let p = r.state.p[steiner * dim..(steiner + 1) * dim].to_vec();
                steiner += 1;
                Some(p)
            }
            Role::Neumann => None,
        })
        .collect::<Vec<_>>();
    let mut vertex_placement = vec![None; graph.vertex_count()];
    // pins win over free vertices merged into them
    let order = (0..placement.len()).filter(|&v| topology.roles[v].is_pin())
        .chain((0..placement.len()).filter(|&v| !topology.roles[v].is_pin()));
    for v in order {
        if vertex_placement[image[v]].is_none() {
            vertex_placement[image[v]] = placement[v].clone();
        }
    }
    let shape = shape_class(&graph, CONTRACTION_TOLERANCE * budget);
    Ok(OptimizedGraph {
        topology: topology.clone(),
        budget,
        lengths: r.lengths,
        graph,
        energy,
        placement,
        vertex_placement,
        diagnostics: Diagnostics {
            starts: r.starts,
            iterations: r.iterations,
            total_iterations,
            first_order_residual: r.residual,
            search_energy: r.energy,
            minimal_length: r.minimal_length,
            templates,
            feasible_templates,
        },
        shape,
    })
}

fn check_budget(budget: f64) -> Result<()> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "budget must be positive and finite, got {budget}"
        )));
    }
    Ok(())
}

fn template_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Minimizes the torsion energy over the lengths of one template with
/// `Σ lengths = budget`.
pub fn optimize_lengths(
    topology: &Topology,
    pins: &PinSet,
    budget: f64,
    options: &OptimizerOptions,
) -> Result<OptimizedGraph> {
    check_budget(budget)?;
    topology.validate()?;
    let r = search_template(topology, pins, budget, options, template_seed(options.seed, 0))?;
    let total = r.total_iterations;
    finish(topology, pins, budget, r, 1, 1, total)
}

/// Best template for the pins and budget.
///
/// Templates are searched in parallel; the winner is chosen by a fixed-order
/// reduction: lowest energy, then (within [`TIE_TOLERANCE`]) fewest vertices,
/// then smallest id.
pub fn optimize(pins: &PinSet, budget: f64, options: &OptimizerOptions) -> Result<OptimizedGraph> {
    check_budget(budget)?;
    let templates = enumerate_topologies(pins.len(), pins.dim())?;
    let results: Vec<Result<TemplateResult>> = templates
        .par_iter()
        .enumerate()
        .map(|(i, t)| search_template(t, pins, budget, options, template_seed(options.seed, i)))
        .collect();

    let mut minimal = f64::INFINITY;
    let mut feasible = Vec::new();
    let mut total_iterations = 0;
    for (t, r) in templates.iter().zip(results) {
        match r {
            Ok(r) => {
                total_iterations += r.total_iterations;
                feasible.push((t, r));
            }
            Err(Error::InfeasibleBudget { minimal: m, .. }) => minimal = minimal.min(m),
            Err(e) => return Err(e),
        }
    }
    if feasible.is_empty() {
        return Err(Error::InfeasibleBudget { budget, minimal });
    }
    let best_energy = feasible
        .iter()
        .map(|(_, r)| r.energy)
        .fold(f64::INFINITY, f64::min);
    let tie = TIE_TOLERANCE * best_energy.abs().max(1e-300);
    let feasible_count = feasible.len();
    let (t, r) = feasible
        .into_iter()
        .filter(|(_, r)| r.energy <= best_energy + tie)
        .min_by(|(ta, _), (tb, _)| {
            ta.vertex_count()
                .cmp(&tb.vertex_count())
                .then_with(|| ta.id.cmp(&tb.id))
        })
        .expect("nonempty");
    finish(t, pins, budget, r, templates.len(), feasible_count, total_iterations)
}

/// [`optimize`] for each budget, in order.
pub fn sweep(
    pins: &PinSet,
    budgets: &[f64],
    options: &OptimizerOptions,
) -> Vec<Result<OptimizedGraph>> {
    budgets
        .par_iter()
        .map(|&l| optimize(pins, l, options))
        .collect()
}

/// Budgets `a, a + step, …` up to `b` (inclusive up to rounding).
pub fn budget_grid(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("bad sweep {a}:{b}:{step}")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| a + step * i as f64).collect())
}

/// A change of winning shape between two consecutive sweep budgets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeSwitch {
    pub lower: f64,
    pub upper: f64,
    /// Midpoint of the bracketing budgets.
    pub estimate: f64,
    pub from: String,
    pub to: String,
}

/// Switches of the winning shape along a sweep, in budget order.
pub fn shape_switches(results: &[OptimizedGraph]) -> Vec<ShapeSwitch> {
    results
        .windows(2)
        .filter(|w| w[0].shape != w[1].shape)
        .map(|w| ShapeSwitch {
            lower: w[0].budget,
            upper: w[1].budget,
            estimate: 0.5 * (w[0].budget + w[1].budget),
            from: w[0].shape.clone(),
            to: w[1].shape.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pins() -> PinSet {
        PinSet::new(vec![vec![0.0], vec![1.0]]).unwrap()
    }

    fn quick() -> OptimizerOptions {
        OptimizerOptions {
            starts: 8,
            ..OptimizerOptions::default()
        }
    }

    #[test]
    fn bare_edge_has_no_freedom() {
        let t = Topology::new(vec![Role::Pin(0), Role::Pin(1)], vec![(0, 1)]).unwrap();
        let r = optimize_lengths(&t, &two_pins(), 1.0, &quick()).unwrap();
        assert_eq!(r.lengths, vec![1.0]);
        assert!((r.energy + 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn short_budget_is_infeasible() {
        assert!(matches!(
            optimize(&two_pins(), 0.9, &quick()),
            Err(Error::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn two_pin_midpoint_attachment() {
        let r = optimize(&two_pins(), 2.0, &quick()).unwrap();
        assert!((r.energy + 11.0 / 24.0).abs() < 1e-10, "{}", r.energy);
        assert!(r.diagnostics.first_order_residual < 1e-7);
        assert!((r.lengths.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pins_must_be_distinct() {
        assert!(PinSet::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).is_err());
        assert!(PinSet::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn grid_includes_the_end() {
        let g = budget_grid(1.8, 1.93, 0.005).unwrap();
        assert_eq!(g.len(), 27);
        assert!((g[26] - 1.93).abs() < 1e-12);
    }
}
