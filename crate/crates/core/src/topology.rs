//! Tree templates for the pinned length-budget problem.
//!
//! A template is a tree whose vertices are the `k` pins, Steiner points of
//! degree at least three, and at most one Neumann leaf. Templates are
//! enumerated up to isomorphisms that fix every pin. Attaching the Neumann
//! leaf in the interior of an edge is represented by an extra Steiner vertex
//! subdividing that edge.
//!
//! Beyond three pins the family (at most `k - 2` branch points and a single
//! Neumann leaf) is a heuristic generalization, not a proven reduction.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::MetricGraph;

/// Largest pin count accepted by [`enumerate_topologies`].
pub const MAX_PINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Role {
    Pin(usize),
    Steiner,
    Neumann,
}

impl Role {
    pub fn is_pin(self) -> bool {
        matches!(self, Role::Pin(_))
    }

    fn tag(self) -> String {
        match self {
            Role::Pin(i) => format!("P{}", i + 1),
            Role::Steiner => "S".into(),
            Role::Neumann => "N".into(),
        }
    }
}

/// A tree template. Vertices are ordered pins first (`Pin(0)` … `Pin(k-1)`),
/// then Steiner points, then the Neumann leaf if present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Topology {
    pub roles: Vec<Role>,
    pub edges: Vec<(usize, usize)>,
    /// Canonical string of the tree rooted at the first pin; equal ids mean
    /// isomorphic templates.
    pub id: String,
}

impl Topology {
    /// Normalizes vertex order and computes the canonical id.
    pub fn new(roles: Vec<Role>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let n = roles.len();
        if n == 0 || edges.len() + 1 != n {
            return Err(Error::InvalidArgument("a template must be a tree".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| roles[v]);
        let mut new_index = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            new_index[v] = i;
        }
        let roles: Vec<Role> = order.iter().map(|&v| roles[v]).collect();
        let mut edges: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (new_index[a], new_index[b]);
                (a.min(b), a.max(b))
            })
            .collect();
        edges.sort_unstable();
        let adj = adjacency(n, &edges);
        if !is_connected(&adj) {
            return Err(Error::InvalidArgument("a template must be a tree".into()));
        }
        let root = roles.iter().position(|r| r.is_pin()).unwrap_or(0);
        let tags: Vec<String> = roles.iter().map(|r| r.tag()).collect();
        let id = rooted_form(&adj, &tags, root, usize::MAX);
        Ok(Topology { roles, edges, id })
    }

    pub fn vertex_count(&self) -> usize {
        self.roles.len()
    }

    pub fn pin_count(&self) -> usize {
        self.roles.iter().filter(|r| r.is_pin()).count()
    }

    pub fn steiner_count(&self) -> usize {
        self.roles.iter().filter(|r| **r == Role::Steiner).count()
    }

    pub fn neumann(&self) -> Option<usize> {
        self.roles.iter().position(|r| *r == Role::Neumann)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.roles.len()];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// Checks the template invariants.
    pub fn validate(&self) -> Result<()> {
        let deg = self.degrees();
        for (v, r) in self.roles.iter().enumerate() {
            match r {
                Role::Steiner if deg[v] < 3 => {
                    return Err(Error::InvalidArgument(format!(
                        "Steiner vertex {v} has degree {}",
                        deg[v]
                    )))
                }
                Role::Neumann if deg[v] != 1 => {
                    return Err(Error::InvalidArgument("the Neumann vertex must be a leaf".into()))
                }
                _ => {}
            }
        }
        if self.roles.iter().filter(|r| **r == Role::Neumann).count() > 1 {
            return Err(Error::InvalidArgument("more than one Neumann leaf".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

fn is_connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// AHU-style canonical string of the subtree at `v` (coming from `parent`).
fn rooted_form(adj: &[Vec<usize>], tags: &[String], v: usize, parent: usize) -> String {
    let mut children: Vec<String> = adj[v]
        .iter()
        .filter(|&&w| w != parent)
        .map(|&w| rooted_form(adj, tags, w, v))
        .collect();
    if children.is_empty() {
        return tags[v].clone();
    }
    children.sort();
    format!("{}({})", tags[v], children.join(","))
}

/// Canonical string of an unrooted tree with unlabeled-up-to-tag vertices,
/// rooted at its center.
fn unrooted_form(adj: &[Vec<usize>], tags: &[String]) -> String {
    let n = adj.len();
    if n == 1 {
        return tags[0].clone();
    }
    let mut degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut removed = vec![false; n];
    let mut remaining = n;
    while remaining > 2 {
        let leaves: Vec<usize> = (0..n).filter(|&v| !removed[v] && degree[v] <= 1).collect();
        for &v in &leaves {
            removed[v] = true;
            for &w in &adj[v] {
                degree[w] = degree[w].saturating_sub(1);
            }
        }
        remaining -= leaves.len();
    }
    let centers: Vec<usize> = (0..n).filter(|&v| !removed[v]).collect();
    centers
        .iter()
        .map(|&c| rooted_form(adj, tags, c, usize::MAX))
        .min()
        .expect("a tree has a center")
}

/// All templates with `k` labeled pins.
///
/// Templates are built by inserting pins one at a time into smaller
/// templates (as a new leaf, on a new branch point, inside an edge, or in
/// place of a Steiner point), then adding an optional Neumann leaf at every
/// vertex and every edge interior. Isomorphic duplicates are removed. The
/// result is sorted by vertex count, then id. `dim` only has to be positive:
/// the combinatorics do not depend on it.
pub fn enumerate_topologies(k: usize, dim: usize) -> Result<Vec<Topology>> {
    if k == 0 {
        return Err(Error::InvalidArgument("at least one pin is needed".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("ambient dimension must be positive".into()));
    }
    if k > MAX_PINS {
        return Err(Error::UnsupportedPinCount {
            found: k,
            max: MAX_PINS,
        });
    }

    let mut bases: BTreeMap<String, Topology> = BTreeMap::new();
    let single = Topology::new(vec![Role::Pin(0)], vec![])?;
    bases.insert(single.id.clone(), single);
    for pin in 1..k {
        let mut next = BTreeMap::new();
        for t in bases.values() {
            for cand in insertions(t, pin) {
                next.entry(cand.id.clone()).or_insert(cand);
            }
        }
        bases = next;
    }

    let mut all: BTreeMap<String, Topology> = BTreeMap::new();
    for t in bases.values() {
        if k > 1 {
            all.entry(t.id.clone()).or_insert_with(|| t.clone());
        }
        for cand in neumann_attachments(t) {
            all.entry(cand.id.clone()).or_insert(cand);
        }
    }
    let mut out: Vec<Topology> = all.into_values().collect();
    out.sort_by(|a, b| {
        a.vertex_count()
            .cmp(&b.vertex_count())
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(out)
}

fn insertions(t: &Topology, pin: usize) -> Vec<Topology> {
    let n = t.vertex_count();
    let mut out = Vec::new();
    let mut push = |roles: Vec<Role>, edges: Vec<(usize, usize)>| {
        out.push(Topology::new(roles, edges).expect("insertion keeps a tree"));
    };
    // new leaf at an existing vertex
    for v in 0..n {
        let mut roles = t.roles.clone();
        roles.push(Role::Pin(pin));
        let mut edges = t.edges.clone();
        edges.push((v, n));
        push(roles, edges);
    }
    for (k, &(a, b)) in t.edges.iter().enumerate() {
        // the pin splits the edge
        let mut roles = t.roles.clone();
        roles.push(Role::Pin(pin));
        let mut edges = t.edges.clone();
        edges[k] = (a, n);
        edges.push((n, b));
        push(roles, edges);
        // a new branch point on the edge carries the pin
        let mut roles = t.roles.clone();
        roles.push(Role::Steiner);
        roles.push(Role::Pin(pin));
        let mut edges = t.edges.clone();
        edges[k] = (a, n);
        edges.push((n, b));
        edges.push((n, n + 1));
        push(roles, edges);
    }
    // the pin takes over a branch point
    for v in 0..n {
        if t.roles[v] == Role::Steiner {
            let mut roles = t.roles.clone();
            roles[v] = Role::Pin(pin);
            push(roles, t.edges.clone());
        }
    }
    out
}

fn neumann_attachments(t: &Topology) -> Vec<Topology> {
    let n = t.vertex_count();
    let mut out = Vec::new();
    for v in 0..n {
        let mut roles = t.roles.clone();
        roles.push(Role::Neumann);
        let mut edges = t.edges.clone();
        edges.push((v, n));
        out.push(Topology::new(roles, edges).expect("tree"));
    }
    for (k, &(a, b)) in t.edges.iter().enumerate() {
        let mut roles = t.roles.clone();
        roles.push(Role::Steiner);
        roles.push(Role::Neumann);
        let mut edges = t.edges.clone();
        edges[k] = (a, n);
        edges.push((n, b));
        edges.push((n, n + 1));
        out.push(Topology::new(roles, edges).expect("tree"));
    }
    out
}

/// Unions vertices joined by edges not longer than `tol`.
fn contract_short_edges(g: &MetricGraph, tol: f64) -> (Vec<usize>, usize) {
    let n = g.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut v: usize) -> usize {
        while p[v] != v {
            p[v] = p[p[v]];
            v = p[v];
        }
        v
    }
    for e in g.edges() {
        if e.length <= tol {
            let (a, b) = (find(&mut parent, e.from), find(&mut parent, e.to));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut class = vec![usize::MAX; n];
    let mut groups = 0;
    for v in 0..n {
        let r = find(&mut parent, v);
        if class[r] == usize::MAX {
            class[r] = groups;
            groups += 1;
        }
        class[v] = class[r];
    }
    (class, groups)
}

/// Shape of a tree graph with pins forgotten: edges not longer than `tol`
/// are contracted, free vertices of degree two are smoothed away, and the
/// remaining tree is written canonically with `D` for Dirichlet and `F` for
/// free vertices. Two graphs differing only by a relabeling of the pins or by
/// degenerate edges have the same shape.
pub fn shape_class(g: &MetricGraph, tol: f64) -> String {
    let (class, groups) = contract_short_edges(g, tol);
    let mut dirichlet = vec![false; groups];
    for (v, vert) in g.vertices().iter().enumerate() {
        dirichlet[class[v]] |= vert.dirichlet;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for e in g.edges() {
        let (a, b) = (class[e.from], class[e.to]);
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    // smooth free vertices of degree two
    let mut alive = vec![true; groups];
    while let Some(v) = (0..groups).find(|&v| alive[v] && !dirichlet[v] && adj[v].len() == 2) {
        let (a, b) = (adj[v][0], adj[v][1]);
        for (x, y) in [(a, b), (b, a)] {
            let pos = adj[x].iter().position(|&w| w == v).expect("adjacent");
            adj[x][pos] = y;
        }
        adj[v].clear();
        alive[v] = false;
    }
    let keep: Vec<usize> = (0..groups).filter(|&v| alive[v]).collect();
    let mut index = vec![usize::MAX; groups];
    for (i, &v) in keep.iter().enumerate() {
        index[v] = i;
    }
    let small: Vec<Vec<usize>> = keep
        .iter()
        .map(|&v| adj[v].iter().map(|&w| index[w]).collect())
        .collect();
    let tags: Vec<String> = keep
        .iter()
        .map(|&v| if dirichlet[v] { "D".into() } else { "F".into() })
        .collect();
    unrooted_form(&small, &tags)
}

/// Whether some isomorphism of the tree `g` preserving edge lengths (up to
/// `tol`) maps the `i`-th pinned vertex to the `perm[i]`-th one.
///
/// Free vertices are matched by brute force, which is fine for the small
/// trees produced by the optimizer.
pub fn admits_pin_permutation(g: &MetricGraph, perm: &[usize], tol: f64) -> bool {
    let pinned: Vec<usize> = (0..g.vertex_count())
        .filter(|&v| g.vertices()[v].pin.is_some())
        .collect();
    if perm.len() != pinned.len() {
        return false;
    }
    let n = g.vertex_count();
    let free: Vec<usize> = (0..n).filter(|&v| g.vertices()[v].pin.is_none()).collect();
    let mut map = vec![usize::MAX; n];
    for (i, &v) in pinned.iter().enumerate() {
        map[v] = pinned[perm[i]];
    }
    let mut lengths: Vec<((usize, usize), f64)> = g
        .edges()
        .iter()
        .map(|e| ((e.from.min(e.to), e.from.max(e.to)), e.length))
        .collect();
    lengths.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut used = vec![false; free.len()];
    search(g, &free, 0, &mut map, &mut used, &lengths, tol)
}

fn search(
    g: &MetricGraph,
    free: &[usize],
    i: usize,
    map: &mut Vec<usize>,
    used: &mut Vec<bool>,
    lengths: &[((usize, usize), f64)],
    tol: f64,
) -> bool {
    if i == free.len() {
        let mut image: Vec<((usize, usize), f64)> = g
            .edges()
            .iter()
            .map(|e| {
                let (a, b) = (map[e.from], map[e.to]);
                ((a.min(b), a.max(b)), e.length)
            })
            .collect();
        image.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        return image
            .iter()
            .zip(lengths)
            .all(|(x, y)| x.0 == y.0 && (x.1 - y.1).abs() <= tol);
    }
    for j in 0..free.len() {
        if used[j] || g.vertices()[free[i]].dirichlet != g.vertices()[free[j]].dirichlet {
            continue;
        }
        used[j] = true;
        map[free[i]] = free[j];
        if search(g, free, i + 1, map, used, lengths, tol) {
            return true;
        }
        used[j] = false;
    }
    map[free[i]] = usize::MAX;
    false
}
