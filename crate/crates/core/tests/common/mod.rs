//! Oracles shared by the integration tests. Nothing here calls the solvers
//! under test.
#![allow(dead_code)]

use rand::Rng;
use specopt_core::graph::{Edge, MetricGraph, Vertex};

/// Torsion energy of the P1 finite-element solution with about `h` mesh
/// width. Interior nodes of every edge are eliminated by tridiagonal solves,
/// leaving a dense system on the free vertex values.
pub fn fem_torsion_energy(g: &MetricGraph, h: f64) -> f64 {
    let free: Vec<Option<usize>> = {
        let mut next = 0;
        g.vertices()
            .iter()
            .map(|v| {
                if v.dirichlet {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let m = free.iter().flatten().count();
    let mut a = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    // Per edge: interior values as w0 + ua wa + ub wb.
    let mut chains = Vec::new();
    for e in g.edges() {
        let n = (e.length / h).ceil().max(2.0) as usize;
        let dx = e.length / n as f64;
        let k = n - 1;
        let w0 = thomas(k, 2.0 / dx, -1.0 / dx, &vec![dx; k]);
        let mut ra = vec![0.0; k];
        ra[0] = 1.0 / dx;
        let wa = thomas(k, 2.0 / dx, -1.0 / dx, &ra);
        let mut rb = vec![0.0; k];
        rb[k - 1] = 1.0 / dx;
        let wb = thomas(k, 2.0 / dx, -1.0 / dx, &rb);
        // Row of the end vertex: (1/dx) u_end - (1/dx) u_neighbour - dx/2.
        let ends = [(e.from, 0usize), (e.to, k - 1)];
        for (side, &(v, near)) in ends.iter().enumerate() {
            let Some(i) = free[v] else { continue };
            let (self_w, other_w, other_v) = if side == 0 {
                (&wa, &wb, e.to)
            } else {
                (&wb, &wa, e.from)
            };
            a[i][i] += 1.0 / dx - self_w[near] / dx;
            if let Some(j) = free[other_v] {
                a[i][j] -= other_w[near] / dx;
            }
            rhs[i] += dx / 2.0 + w0[near] / dx;
        }
        chains.push((n, dx, w0, wa, wb));
    }
    let x = gauss(a, rhs);
    let value = |v: usize| free[v].map_or(0.0, |i| x[i]);
    // Energy of the discrete minimizer is -½ (load · u).
    let mut load_dot_u = 0.0;
    for (e, (n, dx, w0, wa, wb)) in g.edges().iter().zip(&chains) {
        let (ua, ub) = (value(e.from), value(e.to));
        load_dot_u += dx / 2.0 * (ua + ub);
        for i in 0..n - 1 {
            load_dot_u += dx * (w0[i] + ua * wa[i] + ub * wb[i]);
        }
    }
    -0.5 * load_dot_u
}

/// Constant-coefficient tridiagonal solve.
fn thomas(n: usize, diag: f64, off: f64, rhs: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag;
    c[0] = off / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag - off * c[i - 1];
        c[i] = off / denom;
        d[i] = (rhs[i] - off * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// Gaussian elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Energy of the two-pin graph: Dirichlet legs `a`, `b` meeting at a vertex
/// that carries a dangling edge of length `n`, assembled by hand from the
/// per-edge quadratics and Kirchhoff's law at the junction.
pub fn two_pin_energy(a: f64, b: f64, n: f64) -> f64 {
    // Outgoing slopes at the junction: -U/a + a/2, -U/b + b/2 and n.
    let u = if a == 0.0 || b == 0.0 {
        0.0
    } else {
        (a / 2.0 + b / 2.0 + n) / (1.0 / a + 1.0 / b)
    };
    let legs = a.powi(3) / 12.0 + u * a / 2.0 + b.powi(3) / 12.0 + u * b / 2.0;
    let dangling = n.powi(3) / 3.0 + u * n;
    -0.5 * (legs + dangling)
}

/// Brute-force sweep of the attachment position `t` on a unit segment with
/// the rest of the budget on the dangling edge; returns `(t, energy)`.
pub fn attachment_sweep(budget: f64) -> (f64, f64) {
    let n = budget - 1.0;
    let steps = 20_000;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let e = two_pin_energy(t, 1.0 - t, n);
        if e < best.1 {
            best = (t, e);
        }
    }
    // refine by ternary search around the grid minimum
    let (mut lo, mut hi) = ((best.0 - 1.0 / steps as f64).max(0.0), (best.0 + 1.0 / steps as f64).min(1.0));
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if two_pin_energy(m1, 1.0 - m1, n) < two_pin_energy(m2, 1.0 - m2, n) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, two_pin_energy(t, 1.0 - t, n))
}

/// Random tree on `n` vertices with random lengths in `[0.1, 2]`; vertex 0
/// is Dirichlet, others with probability `p_dirichlet`.
pub fn random_tree<R: Rng>(rng: &mut R, n: usize, p_dirichlet: f64) -> MetricGraph {
    let vertices: Vec<Vertex> = (0..n)
        .map(|i| Vertex {
            label: format!("v{i}"),
            dirichlet: i == 0 || rng.random_bool(p_dirichlet),
            pin: None,
        })
        .collect();
    let edges = (1..n)
        .map(|i| Edge {
            from: rng.random_range(0..i),
            to: i,
            length: rng.random_range(0.1..2.0),
        })
        .collect();
    MetricGraph::new(vertices, edges).unwrap()
}

/// Random connected graph: a random tree plus `extra` edges, which may be
/// parallel to existing ones.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, extra: usize, p_dirichlet: f64) -> MetricGraph {
    let tree = random_tree(rng, n, p_dirichlet);
    let mut edges = tree.edges().to_vec();
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n);
        while b == a {
            b = rng.random_range(0..n);
        }
        edges.push(Edge {
            from: a,
            to: b,
            length: rng.random_range(0.1..2.0),
        });
    }
    MetricGraph::new(tree.vertices().to_vec(), edges).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Pin(usize),
    Steiner,
    Neumann,
}

/// Labeled tree from a Prüfer sequence.
pub fn prufer_tree(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::new();
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        edges.push((leaf, s));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Admissible templates with `k` pins, counted up to isomorphisms fixing the
/// pins, by listing every labeled tree and comparing pairwise.
pub fn brute_force_template_count(k: usize) -> usize {
    let mut classes: Vec<(Vec<Kind>, Vec<(usize, usize)>)> = Vec::new();
    let max_n = if k == 1 { 2 } else { k + (k - 2) + 2 };
    for n in k.max(2)..=max_n {
        let extra = n - k;
        // roles of the non-pin vertices: all Steiner, or one Neumann
        let mut role_sets = vec![vec![Kind::Steiner; extra]];
        if extra > 0 {
            let mut r = vec![Kind::Steiner; extra];
            r[extra - 1] = Kind::Neumann;
            role_sets.push(r);
        }
        for extra_roles in role_sets {
            let roles: Vec<Kind> = (0..k).map(Kind::Pin).chain(extra_roles).collect();
            let total = if n >= 2 { n.pow((n - 2) as u32) } else { 1 };
            for code in 0..total {
                let mut seq = Vec::with_capacity(n.saturating_sub(2));
                let mut c = code;
                for _ in 0..n.saturating_sub(2) {
                    seq.push(c % n);
                    c /= n;
                }
                let edges = prufer_tree(&seq, n);
                if !admissible(&roles, &edges, k) {
                    continue;
                }
                if !classes.iter().any(|(r, e)| isomorphic(r, e, &roles, &edges)) {
                    classes.push((roles.clone(), edges));
                }
            }
        }
    }
    classes.len()
}

fn admissible(roles: &[Kind], edges: &[(usize, usize)], k: usize) -> bool {
    let n = roles.len();
    let mut degree = vec![0; n];
    for &(a, b) in edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let neumann = roles.iter().position(|r| *r == Kind::Neumann);
    let attach = neumann.map(|v| {
        edges
            .iter()
            .find(|&&(a, b)| a == v || b == v)
            .map(|&(a, b)| if a == v { b } else { a })
            .unwrap()
    });
    let mut branch_steiner = 0;
    for v in 0..n {
        match roles[v] {
            Kind::Neumann => {
                if degree[v] != 1 {
                    return false;
                }
            }
            Kind::Steiner => {
                if degree[v] < 3 {
                    return false;
                }
                // a degree-3 Steiner vertex carrying the Neumann leaf only
                // subdivides an edge
                if !(Some(v) == attach && degree[v] == 3) {
                    branch_steiner += 1;
                }
            }
            Kind::Pin(_) => {}
        }
    }
    branch_steiner <= k.saturating_sub(2)
}

fn isomorphic(ra: &[Kind], ea: &[(usize, usize)], rb: &[Kind], eb: &[(usize, usize)]) -> bool {
    if ra.len() != rb.len() {
        return false;
    }
    let n = ra.len();
    let norm = |e: &[(usize, usize)], map: &[usize]| {
        let mut out: Vec<(usize, usize)> = e
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (map[a], map[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        out.sort();
        out
    };
    let target = norm(eb, &(0..n).collect::<Vec<_>>());
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        if (0..n).all(|v| ra[v] == rb[perm[v]]) && norm(ea, &perm) == target {
            return true;
        }
        if !next_permutation(&mut perm) {
            return false;
        }
    }
}

pub fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Energy `-½ h Σ f u` of the finite-difference solution of
/// `-u'' + V u = f` at interior nodes with spacing `h`, zero at both ends.
pub fn schrodinger_energy(h: f64, f: &[f64], v: &[f64]) -> (f64, Vec<f64>) {
    let n = f.len();
    let off = -1.0 / (h * h);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let diag = 2.0 / (h * h) + v[i];
        let (cp, dp) = if i == 0 { (0.0, 0.0) } else { (c[i - 1], d[i - 1]) };
        let denom = diag - off * cp;
        c[i] = off / denom;
        d[i] = (f[i] - off * dp) / denom;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    let e = -0.5 * h * f.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
    (e, d)
}

/// Random nonnegative potential on `n` interior nodes: a few smooth bumps
/// over a piecewise-constant floor, occasionally zero on whole blocks.
pub fn random_potential_shape<R: Rng>(rng: &mut R, n: usize, allow_zero: bool) -> Vec<f64> {
    let blocks = rng.random_range(1..=8usize);
    let mut floor: Vec<f64> = (0..blocks)
        .map(|_| {
            if allow_zero && rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.05..3.0)
            }
        })
        .collect();
    if floor.iter().all(|v| *v == 0.0) {
        floor[0] = 1.0;
    }
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(0..4))
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.02..0.3), rng.random_range(0.0..5.0)))
        .collect();
    (0..n)
        .map(|i| {
            let t = (i as f64 + 1.0) / (n as f64 + 1.0);
            let mut v = floor[i * blocks / n];
            for &(c, w, a) in &bumps {
                v += a * (-((t - c) / w).powi(2)).exp();
            }
            v
        })
        .collect()
}
