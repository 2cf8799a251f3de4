//! Fixtures shared by the benchmarks.

use specopt_core::graph::{Edge, GraphBuilder, MetricGraph, Vertex};
use specopt_core::optimize::PinSet;

/// Star with `legs` unit legs and clamped tips.
pub fn star(legs: usize) -> MetricGraph {
    let mut b = GraphBuilder::new().vertex("c", false);
    for i in 0..legs {
        let tip = format!("t{i}");
        b = b.vertex(&tip, true).edge("c", &tip, 1.0);
    }
    b.build().expect("star is valid")
}

/// Comb: a clamped spine of `teeth` unit segments with a free unit tooth at
/// every spine vertex. A tree, so the torsion solve takes the tree path.
pub fn comb(teeth: usize) -> MetricGraph {
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    for i in 0..=teeth {
        vertices.push(Vertex { label: format!("s{i}"), dirichlet: i == 0 || i == teeth, pin: None });
    }
    for i in 0..teeth {
        edges.push(Edge { from: i, to: i + 1, length: 1.0 });
    }
    for i in 1..teeth {
        let tip = vertices.len();
        vertices.push(Vertex { label: format!("t{i}"), dirichlet: false, pin: None });
        edges.push(Edge { from: i, to: tip, length: 1.0 });
    }
    MetricGraph::new(vertices, edges).expect("comb is valid")
}

/// Comb with its two ends joined, which makes the graph cyclic.
pub fn ring_comb(teeth: usize) -> MetricGraph {
    let g = comb(teeth);
    let mut edges = g.edges().to_vec();
    edges.push(Edge { from: 0, to: teeth, length: 1.0 });
    MetricGraph::new(g.vertices().to_vec(), edges).expect("ring comb is valid")
}

pub fn triangle() -> PinSet {
    PinSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).expect("distinct pins")
}

pub fn two_pins() -> PinSet {
    PinSet::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).expect("distinct pins")
}
