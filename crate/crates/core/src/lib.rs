//! Spectral optimization on metric graphs and on one-dimensional Schrödinger
//! operators.
//!
//! The crate is split along the three problem families it solves:
//!
//! * [`graph`], [`function`]: metric graphs, their intrinsic distance, the
//!   immersion test for the admissible class, and functions living on edges.
//! * [`torsion`], [`spectrum`], [`rearrange`]: the exact torsion (Dirichlet
//!   energy) minimizer, finite-element eigenvalues and the monotone
//!   rearrangement onto an interval.
//! * [`topology`], [`optimize`]: tree templates with pins, Steiner points and
//!   a Neumann leaf, and length optimization under a total-length budget.
//! * [`potential`]: energies of `-u'' + V u = f` on an interval and the
//!   optimal potentials under `∫ V^p = 1`.
//!
//! Sign conventions: the torsion energy is `½∫|u'|² - ∫u`, which is negative
//! at the minimizer. At every vertex, derivatives are taken pointing *out* of
//! the vertex along each incident edge; Kirchhoff's condition says they sum to
//! zero at free vertices.

pub mod error;
pub mod export;
pub mod function;
pub mod graph;
pub mod optimize;
pub mod potential;
pub mod rearrange;
pub mod spectrum;
pub mod topology;
pub mod torsion;

mod linalg;

pub use error::{Error, Result};
pub use function::{EdgeFunction, GraphFunction};
pub use graph::{Edge, GraphBuilder, GraphStats, ImmersionReport, MetricGraph, Vertex, VertexId};
pub use optimize::{OptimizedGraph, OptimizerOptions, PinSet};
pub use potential::{GridPotential, PotentialSolution, SourceTerm, UniformGrid};
pub use spectrum::SpectrumReport;
pub use topology::{Role, Topology};
pub use torsion::TorsionSolution;
