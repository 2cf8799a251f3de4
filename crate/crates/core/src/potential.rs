//! Schrödinger potentials on an interval.
//!
//! Everything lives on a uniform grid with values at the interior nodes; the
//! state vanishes at both endpoints. The energy of a potential `V` is
//!
//! ```text
//! E_f(V) = min_u ½∫|u'|² + ½∫V u² - ∫f u
//! ```
//!
//! discretized with central differences, so the minimizer solves the
//! tridiagonal system `-u'' + V u = f`. Integrals are `h Σ` over interior
//! nodes, which is the trapezoid rule for anything vanishing at the ends.
//!
//! Optimizing `V` under `∫V^p = 1` reduces, after swapping the order of
//! optimization, to minimizing
//!
//! ```text
//! J(u) = ½∫|u'|² + ½(∫|u|^q)^(2/q) - ∫f u,   q = 2p / (p - 1)
//! ```
//!
//! and the optimal potential is read off `u`. For `p = 1` the middle term
//! becomes `½‖u‖²_∞`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::TridiagonalLu;

/// Smoothing schedule for `|u|` when `q < 2`.
pub const EPSILON_SCHEDULE: [f64; 3] = [1e-3, 1e-5, 1e-7];

/// Exponents `m` of the `L^m` norms approximating the sup norm at `p = 1`.
pub const SUP_NORM_EXPONENTS: [usize; 4] = [8, 16, 32, 64];

/// Starts used when the reduced functional is not convex (`-1 < p < 0`).
pub const NONCONVEX_STARTS: usize = 16;

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Largest grid the nonexistence demo will build.
pub const MAX_DEMO_CELLS: usize = 1 << 22;

/// Minimum number of cells in a demo grid, so that wide spikes are still
/// resolved.
const MIN_DEMO_CELLS: usize = 4096;

const MAX_NEWTON_ITERATIONS: usize = 200;
const NEWTON_TOLERANCE: f64 = 1e-13;
/// A Newton solve that stalls above this relative residual is a failure.
const ACCEPT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformGrid {
    pub x0: f64,
    pub x1: f64,
    pub cells: usize,
}

impl UniformGrid {
    pub fn new(x0: f64, x1: f64, cells: usize) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && x1 > x0) {
            return Err(Error::InvalidArgument(format!("empty interval ({x0}, {x1})")));
        }
        if cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 cells, got {cells}"
            )));
        }
        Ok(UniformGrid { x0, x1, cells })
    }

    /// Finest grid whose width does not exceed `h`.
    pub fn with_width(x0: f64, x1: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("mesh width {h} must be positive")));
        }
        let cells = ((x1 - x0) / h * (1.0 - 1e-12)).ceil();
        if !(cells < 1e9) {
            return Err(Error::InvalidArgument(format!("mesh width {h} is too small")));
        }
        Self::new(x0, x1, cells as usize)
    }

    pub fn h(&self) -> f64 {
        (self.x1 - self.x0) / self.cells as f64
    }

    pub fn length(&self) -> f64 {
        self.x1 - self.x0
    }

    /// Number of interior nodes, the length of every grid function.
    pub fn len(&self) -> usize {
        self.cells - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of interior node `i` (node `i + 1` counting the left end).
    pub fn node(&self, i: usize) -> f64 {
        self.x0 + (i + 1) as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// `h Σ g_i`.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.h() * g.iter().sum::<f64>()
    }

    fn check(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                found: g.len(),
            });
        }
        Ok(())
    }
}

/// Right-hand side `f` of the state equation.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceTerm {
    Constant(f64),
    /// `sin(πx)`.
    Sin,
    /// 0 left of the midpoint of the domain, 1 from it on.
    Step,
    /// Values at the grid nodes, either all of them or only the interior.
    Samples(Vec<f64>),
}

impl SourceTerm {
    pub fn sample(&self, grid: &UniformGrid) -> Result<Vec<f64>> {
        let mid = 0.5 * (grid.x0 + grid.x1);
        Ok(match self {
            SourceTerm::Constant(c) => vec![*c; grid.len()],
            SourceTerm::Sin => grid.nodes().iter().map(|x| (std::f64::consts::PI * x).sin()).collect(),
            SourceTerm::Step => grid.nodes().iter().map(|&x| if x < mid { 0.0 } else { 1.0 }).collect(),
            SourceTerm::Samples(v) => {
                if v.len() == grid.cells + 1 {
                    v[1..grid.cells].to_vec()
                } else if v.len() == grid.len() {
                    v.clone()
                } else {
                    return Err(Error::GridMismatch {
                        expected: grid.cells + 1,
                        found: v.len(),
                    });
                }
            }
        })
    }
}

impl fmt::Display for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTerm::Constant(c) => write!(f, "const:{c}"),
            SourceTerm::Sin => f.write_str("sin"),
            SourceTerm::Step => f.write_str("step"),
            SourceTerm::Samples(v) => write!(f, "samples[{}]", v.len()),
        }
    }
}

impl FromStr for SourceTerm {
    type Err = Error;

    /// Parses the builtins `const:<c>`, `sin` and `step`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => Ok(SourceTerm::Sin),
            "step" => Ok(SourceTerm::Step),
            _ => {
                let c = s
                    .strip_prefix("const:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .filter(|c| c.is_finite())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown source term `{s}`")))?;
                Ok(SourceTerm::Constant(c))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPotential {
    pub grid: UniformGrid,
    /// `V` at the interior nodes.
    pub values: Vec<f64>,
    pub p: f64,
    /// `∫V^p`.
    pub constraint: f64,
}

impl GridPotential {
    pub fn new(grid: UniformGrid, values: Vec<f64>, p: f64) -> Result<Self> {
        grid.check(&values)?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "potential values must be finite and nonnegative, found {v}"
            )));
        }
        if p == 0.0 || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("exponent p = {p} is not allowed")));
        }
        let constraint = constraint_integral(&grid, &values, p);
        Ok(GridPotential {
            grid,
            values,
            p,
            constraint,
        })
    }

    /// Rescales `values` so that `∫V^p = 1`.
    pub fn normalized(grid: UniformGrid, mut values: Vec<f64>, p: f64) -> Result<Self> {
        let raw = Self::new(grid, values.clone(), p)?;
        if !(raw.constraint > 0.0 && raw.constraint.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize a potential with ∫V^p = {}",
                raw.constraint
            )));
        }
        let scale = raw.constraint.powf(-1.0 / p);
        values.iter_mut().for_each(|v| *v *= scale);
        Self::new(grid, values, p)
    }

    /// The constant admissible potential.
    pub fn constant(grid: UniformGrid, p: f64) -> Result<Self> {
        Self::normalized(grid, vec![1.0; grid.len()], p)
    }

    pub fn zero(grid: UniformGrid) -> Self {
        GridPotential {
            grid,
            values: vec![0.0; grid.len()],
            p: 1.0,
            constraint: 0.0,
        }
    }

    pub fn is_admissible(&self) -> bool {
        (self.constraint - 1.0).abs() <= 1e-10
    }
}

fn constraint_integral(grid: &UniformGrid, values: &[f64], p: f64) -> f64 {
    grid.h() * values.iter().map(|v| v.powf(p)).sum::<f64>()
}

/// Solves `-u'' + V u = f` with `u = 0` at both ends.
pub fn solve_state(grid: &UniformGrid, f: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    grid.check(f)?;
    grid.check(v)?;
    let n = grid.len();
    let h2 = grid.h() * grid.h();
    let off = vec![-1.0; n - 1];
    let diag: Vec<f64> = v.iter().map(|v| 2.0 + h2 * v).collect();
    let lu = TridiagonalLu::new(&off, &diag, &off)?;
    let rhs: Vec<f64> = f.iter().map(|f| h2 * f).collect();
    Ok(lu.solve(&rhs))
}

/// Discrete `½∫|u'|² + ½∫V u² - ∫f u`.
pub fn energy_of_state(grid: &UniformGrid, f: &[f64], v: &[f64], u: &[f64]) -> f64 {
    let h = grid.h();
    let mut grad = 0.0;
    let mut prev = 0.0;
    for &x in u.iter().chain(std::iter::once(&0.0)) {
        grad += (x - prev) * (x - prev);
        prev = x;
    }
    let mut rest = 0.0;
    for i in 0..u.len() {
        rest += 0.5 * v[i] * u[i] * u[i] - f[i] * u[i];
    }
    0.5 * grad / h + h * rest
}

/// Relative residual of `-u'' + V u = f`: the largest nodal defect over the
/// largest sum of absolute values of the terms at a node.
pub fn state_residual(grid: &UniformGrid, f: &[f64], v: &[f64], u: &[f64]) -> f64 {
    let h2 = grid.h() * grid.h();
    let n = u.len();
    let (mut defect, mut scale) = (0.0f64, 0.0f64);
    for i in 0..n {
        let l = if i > 0 { u[i - 1] } else { 0.0 };
        let r = if i + 1 < n { u[i + 1] } else { 0.0 };
        let r_i = (2.0 * u[i] - l - r) / h2 + v[i] * u[i] - f[i];
        let s_i = (2.0 * u[i].abs() + l.abs() + r.abs()) / h2 + (v[i] * u[i]).abs() + f[i].abs();
        defect = defect.max(r_i.abs());
        scale = scale.max(s_i);
    }
    if scale == 0.0 {
        0.0
    } else {
        defect / scale
    }
}

/// `E_f(V)` together with the state that attains it.
pub fn dirichlet_energy(f: &[f64], v: &GridPotential) -> Result<(f64, Vec<f64>)> {
    let u = solve_state(&v.grid, f, &v.values)?;
    Ok((energy_of_state(&v.grid, f, &v.values, &u), u))
}

/// `J(u) = ½∫|u'|² + ½(∫|u|_ε^q)^(2/q) - ∫f u` with `|u|_ε = (u² + ε²)^½`.
#[derive(Debug, Clone)]
pub struct ReducedFunctional<'a> {
    pub grid: UniformGrid,
    pub f: &'a [f64],
    pub q: f64,
    pub epsilon: f64,
}

/// Pieces of the middle term, scaled by `s = max |u|_ε` to stay in range for
/// large `q`.
struct NormTerms {
    /// `(∫|u|_ε^q)^(2/q)`.
    norm_sq: f64,
    /// `(∫|u|_ε^q)^(2/q - 1) |u_i|_ε^(q-2)`, which is the potential.
    weight: Vec<f64>,
    /// Coefficient of the rank-one part of the Hessian.
    rank_one: f64,
    /// `h |u_i|_ε^(q-2) u_i / s` scaled so that `rank_one g gᵀ` is that part.
    g: Vec<f64>,
}

impl<'a> ReducedFunctional<'a> {
    pub fn new(grid: UniformGrid, f: &'a [f64], q: f64, epsilon: f64) -> Result<Self> {
        grid.check(f)?;
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!("exponent q = {q} must be positive")));
        }
        if q < 2.0 && !(epsilon > 0.0) {
            return Err(Error::InvalidArgument("q < 2 needs a positive smoothing".into()));
        }
        Ok(ReducedFunctional { grid, f, q, epsilon })
    }

    fn terms(&self, u: &[f64]) -> NormTerms {
        let h = self.grid.h();
        let q = self.q;
        let e2 = self.epsilon * self.epsilon;
        let r: Vec<f64> = u.iter().map(|x| (x * x + e2).sqrt()).collect();
        let s = r.iter().copied().fold(0.0f64, f64::max);
        if s == 0.0 {
            return NormTerms {
                norm_sq: 0.0,
                weight: vec![0.0; u.len()],
                rank_one: 0.0,
                g: vec![0.0; u.len()],
            };
        }
        let scaled = h * r.iter().map(|r| (r / s).powf(q)).sum::<f64>();
        let c = scaled.powf(2.0 / q - 1.0);
        let rel: Vec<f64> = r.iter().map(|r| (r / s).powf(q - 2.0)).collect();
        NormTerms {
            norm_sq: s * s * scaled.powf(2.0 / q),
            weight: rel.iter().map(|w| c * w).collect(),
            rank_one: (2.0 - q) * scaled.powf(2.0 / q - 2.0),
            g: rel.iter().zip(u).map(|(w, x)| h * w * x / s).collect(),
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let zero = vec![0.0; u.len()];
        let t = self.terms(u);
        energy_of_state(&self.grid, self.f, &zero, u) + 0.5 * t.norm_sq
    }

    /// Gradient with respect to the nodal values.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let t = self.terms(u);
        let mut g = vec![0.0; u.len()];
        self.gradient_into(u, &t.weight, &mut g);
        g
    }

    fn gradient_into(&self, u: &[f64], weight: &[f64], out: &mut [f64]) {
        let h = self.grid.h();
        let n = u.len();
        for i in 0..n {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            let r = if i + 1 < n { u[i + 1] } else { 0.0 };
            out[i] = (2.0 * u[i] - l - r) / h + h * (weight[i] * u[i] - self.f[i]);
        }
    }

    /// The potential `V = (∫|u|_ε^q)^(2/q - 1) |u|_ε^(q-2)`, normalized by
    /// construction.
    pub fn potential(&self, u: &[f64]) -> Vec<f64> {
        self.terms(u).weight
    }

    /// Damped Newton iteration from `u`. Returns the minimizer and the
    /// iteration count.
    fn minimize(&self, mut u: Vec<f64>) -> Result<(Vec<f64>, usize)> {
        let h = self.grid.h();
        let n = u.len();
        let q = self.q;
        let e2 = self.epsilon * self.epsilon;
        let mut grad = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut f = self.value(&u);
        let off = vec![-1.0 / h; n.saturating_sub(1)];
        for it in 0..MAX_NEWTON_ITERATIONS {
            let t = self.terms(&u);
            self.gradient_into(&u, &t.weight, &mut grad);
            let residual = self.relative_residual(&u, &t.weight, &grad);
            if residual <= NEWTON_TOLERANCE {
                return Ok((u, it));
            }
            // Hessian: tridiagonal part, diagonal from the norm, rank one.
            let diag: Vec<f64> = (0..n)
                .map(|i| {
                    let r2 = u[i] * u[i] + e2;
                    let curv = if r2 > 0.0 { ((q - 1.0) * u[i] * u[i] + e2) / r2 } else { q - 1.0 };
                    2.0 / h + (h * t.weight[i] * curv).max(0.0)
                })
                .collect();
            let lu = TridiagonalLu::new(&off, &diag, &off)?;
            let y = lu.solve(&grad);
            let z = lu.solve(&t.g);
            let gy: f64 = t.g.iter().zip(&y).map(|(a, b)| a * b).sum();
            let gz: f64 = t.g.iter().zip(&z).map(|(a, b)| a * b).sum();
            let denom = 1.0 + t.rank_one * gz;
            let dir: Vec<f64> = if denom > 1e-12 {
                y.iter().zip(&z).map(|(y, z)| y - z * t.rank_one * gy / denom).collect()
            } else {
                y
            };
            let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
            let dir = if slope > 0.0 {
                dir
            } else {
                slope = grad.iter().map(|g| g * g).sum::<f64>() * h;
                grad.iter().map(|g| g * h).collect()
            };
            // The predicted decrease is below the rounding of `J`.
            if slope <= 1e-15 * f.abs() && residual <= ACCEPT_TOLERANCE {
                return Ok((u, it));
            }
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-12 {
                for i in 0..n {
                    trial[i] = u[i] - step * dir[i];
                }
                let ft = self.value(&trial);
                if ft <= f - 1e-4 * step * slope {
                    std::mem::swap(&mut u, &mut trial);
                    f = ft;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                if residual <= ACCEPT_TOLERANCE {
                    return Ok((u, it));
                }
                return Err(Error::NonConvergence {
                    what: format!("Newton iteration for q = {q}"),
                    residual,
                });
            }
        }
        let t = self.terms(&u);
        self.gradient_into(&u, &t.weight, &mut grad);
        let residual = self.relative_residual(&u, &t.weight, &grad);
        if residual <= ACCEPT_TOLERANCE {
            Ok((u, MAX_NEWTON_ITERATIONS))
        } else {
            Err(Error::NonConvergence {
                what: format!("Newton iteration for q = {q}"),
                residual,
            })
        }
    }

    fn relative_residual(&self, u: &[f64], weight: &[f64], grad: &[f64]) -> f64 {
        let h = self.grid.h();
        let n = u.len();
        let mut scale = 0.0f64;
        for i in 0..n {
            let l = if i > 0 { u[i - 1].abs() } else { 0.0 };
            let r = if i + 1 < n { u[i + 1].abs() } else { 0.0 };
            scale = scale.max((2.0 * u[i].abs() + l + r) / h + h * ((weight[i] * u[i]).abs() + self.f[i].abs()));
        }
        let defect = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale == 0.0 {
            0.0
        } else {
            defect / scale
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `p > 1`, maximizing.
    Maximize,
    /// `p = 1`, maximizing; the potential sits on the plateaus of `|u|`.
    MaximizeSupNorm,
    /// `p < 0`, minimizing.
    Minimize,
}

/// Extra output for `p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plateau {
    /// `M = max |u|`.
    pub sup: f64,
    /// Intervals where `u = M`, ends placed between grid nodes by the shape
    /// of `u` next to the plateau.
    pub omega_plus: Vec<(f64, f64)>,
    /// Intervals where `u = -M`.
    pub omega_minus: Vec<(f64, f64)>,
    /// `|ω₊| + |ω₋|`.
    pub measure: f64,
    /// `∫_{ω₊} f - ∫_{ω₋} f`, which equals `M` in the continuum.
    pub duality: f64,
    /// Richardson extrapolation of `M` over the `L^m` continuation.
    pub extrapolated_sup: f64,
    /// Richardson extrapolation of half the plateau measure.
    pub extrapolated_half_width: f64,
    /// `(m, M_m, half width)` along the continuation.
    pub continuation: Vec<(usize, f64, f64)>,
    /// `1 / (2M)`, the half width the relation `|ω₊| M = 1` would give for a
    /// single symmetric plateau. Not consistent with `∫V = 1`; reported for
    /// comparison only.
    pub unit_mass_half_width: f64,
}

impl Plateau {
    pub fn half_width(&self) -> f64 {
        0.5 * self.measure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSolution {
    pub potential: GridPotential,
    /// State `u` at the interior nodes.
    pub state: Vec<f64>,
    /// `E_f(V)`.
    pub energy: f64,
    pub regime: Regime,
    /// Relative residual of `-u'' + V u = f`.
    pub residual: f64,
    /// Largest relative change of `V` when recomputed from the state of `V`;
    /// zero at a fixed point of the coupling.
    pub coupling_residual: f64,
    pub iterations: usize,
    /// Set when the reduced problem is not convex and the answer is the best
    /// of several local searches.
    pub local: bool,
    /// Smoothing of `|u|` in the final solve.
    pub epsilon: f64,
    pub plateau: Option<Plateau>,
}

/// `q = 2p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    2.0 * p / (p - 1.0)
}

fn finish(
    functional: &ReducedFunctional<'_>,
    u: &[f64],
    p: f64,
    regime: Regime,
    iterations: usize,
    local: bool,
) -> Result<PotentialSolution> {
    let grid = functional.grid;
    let v = functional.potential(u);
    let potential = GridPotential::new(grid, v, p)?;
    let (energy, state) = dirichlet_energy(functional.f, &potential)?;
    let again = functional.potential(&state);
    let vmax = potential.values.iter().copied().fold(0.0f64, f64::max);
    let coupling_residual = if vmax > 0.0 {
        again
            .iter()
            .zip(&potential.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / vmax
    } else {
        0.0
    };
    let residual = state_residual(&grid, functional.f, &potential.values, &state);
    Ok(PotentialSolution {
        potential,
        state,
        energy,
        regime,
        residual,
        coupling_residual,
        iterations,
        local,
        epsilon: functional.epsilon,
        plateau: None,
    })
}

/// Maximizes `E_f(V)` over `∫V^p = 1` for `p > 1`.
pub fn maximize_potential(grid: &UniformGrid, f: &[f64], p: f64) -> Result<PotentialSolution> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("maximization needs p > 1, got {p}")));
    }
    let functional = ReducedFunctional::new(*grid, f, conjugate_exponent(p), 0.0)?;
    let start = solve_state(grid, f, &vec![0.0; grid.len()])?;
    let (u, iterations) = functional.minimize(start)?;
    finish(&functional, &u, p, Regime::Maximize, iterations, false)
}

/// Minimizes `E_f(V)` over `∫V^p = 1` for `p < 0`.
///
/// For `p ≤ -1` the reduced problem is convex and one continuation pass over
/// [`EPSILON_SCHEDULE`] suffices. For `-1 < p < 0` it is not, and the best of
/// [`NONCONVEX_STARTS`] passes is returned with the `local` flag set.
pub fn minimize_potential(grid: &UniformGrid, f: &[f64], p: f64, seed: u64) -> Result<PotentialSolution> {
    if !(p < 0.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("minimization needs p < 0, got {p}")));
    }
    grid.check(f)?;
    let q = conjugate_exponent(p);
    let convex = q >= 1.0;
    let starts = if convex { 1 } else { NONCONVEX_STARTS };
    let base = solve_state(grid, f, &vec![0.0; grid.len()])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    for start in 0..starts {
        let mut u = if start == 0 {
            base.clone()
        } else {
            random_start(grid, f, &mut rng)?
        };
        let mut iterations = 0;
        for &epsilon in &EPSILON_SCHEDULE {
            let functional = ReducedFunctional::new(*grid, f, q, epsilon)?;
            let (next, it) = functional.minimize(u)?;
            u = next;
            iterations += it;
        }
        let functional = ReducedFunctional::new(*grid, f, q, EPSILON_SCHEDULE[2])?;
        let value = functional.value(&u);
        if best.as_ref().is_none_or(|b| value < b.0) {
            best = Some((value, u, iterations));
        }
    }
    let (_, u, iterations) = best.expect("at least one start");
    let functional = ReducedFunctional::new(*grid, f, q, EPSILON_SCHEDULE[2])?;
    finish(&functional, &u, p, Regime::Minimize, iterations, !convex)
}

/// State of a random piecewise-constant potential, scaled by a random factor.
fn random_start(grid: &UniformGrid, f: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let pieces = rng.random_range(1..=8usize);
    let heights: Vec<f64> = (0..pieces).map(|_| rng.random_range(0.0..50.0)).collect();
    let n = grid.len();
    let v: Vec<f64> = (0..n).map(|i| heights[i * pieces / n]).collect();
    let scale = rng.random_range(0.2..2.0);
    Ok(solve_state(grid, f, &v)?.into_iter().map(|x| scale * x).collect())
}

/// Maximizes `E_f(V)` over `∫V = 1`.
///
/// The sup norm is first replaced by `L^m` norms for `m` in
/// [`SUP_NORM_EXPONENTS`] (the `p = m / (m - 2)` problem), which gives the
/// extrapolated estimates. The answer itself is the exact minimizer of the
/// discrete `J_1`, written as `min ½∫|u'|² + ½M² - ∫f u` over `|u| ≤ M` and
/// solved jointly in `(u, M)` by a primal-dual active set method started
/// from the last continuation state.
pub fn maximize_potential_p1(grid: &UniformGrid, f: &[f64]) -> Result<PotentialSolution> {
    grid.check(f)?;
    if f.iter().all(|x| *x == 0.0) {
        return Err(Error::DegenerateMax);
    }
    let h = grid.h();
    let mut u = solve_state(grid, f, &vec![0.0; grid.len()])?;
    let mut continuation = Vec::new();
    let mut iterations = 0;
    for &m in &SUP_NORM_EXPONENTS {
        let functional = ReducedFunctional::new(*grid, f, m as f64, 0.0)?;
        let (next, it) = functional.minimize(u)?;
        u = next;
        iterations += it;
        let v = functional.potential(&u);
        let sup = u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        // On the plateaus V = |f| / M, so M ∫ V / |f| measures them.
        let measure: f64 = v
            .iter()
            .zip(f)
            .filter(|(_, f)| **f != 0.0)
            .map(|(v, f)| h * sup * v / f.abs())
            .sum();
        continuation.push((m, sup, 0.5 * measure));
    }
    let k = continuation.len();
    let (_, m_prev, a_prev) = continuation[k - 2];
    let (_, m_last, a_last) = continuation[k - 1];
    let extrapolated_sup = 2.0 * m_last - m_prev;
    let extrapolated_half_width = 2.0 * a_last - a_prev;

    let sides = initial_contact(&u, m_last);
    let contact = solve_sup_norm_problem(grid, f, sides)?;
    let sup = contact.level;
    iterations += contact.iterations;
    let u = contact.u;
    let v: Vec<f64> = contact.multipliers.iter().map(|l| l.abs() / (h * sup)).collect();
    let potential = GridPotential::new(*grid, v, 1.0)?;
    let (energy, state) = dirichlet_energy(f, &potential)?;
    let residual = state_residual(grid, f, &potential.values, &state);
    let coupling_residual = state
        .iter()
        .zip(&u)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / sup;

    let runs = |sign: i8| -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<usize> = None;
        for i in 0..=u.len() {
            let on = i < u.len() && contact.side[i] == sign;
            match (on, open) {
                (true, None) => open = Some(i),
                (false, Some(s)) => {
                    out.push(plateau_edges(grid, f, &contact.multipliers, s, i - 1));
                    open = None;
                }
                _ => {}
            }
        }
        out
    };
    let omega_plus = runs(1);
    let omega_minus = runs(-1);
    let measure: f64 = omega_plus.iter().chain(&omega_minus).map(|(a, b)| b - a).sum();
    let duality = omega_plus.iter().map(|&(a, b)| integrate_linear(grid, f, a, b)).sum::<f64>()
        - omega_minus.iter().map(|&(a, b)| integrate_linear(grid, f, a, b)).sum::<f64>();
    let plateau = Plateau {
        sup,
        omega_plus,
        omega_minus,
        measure,
        duality,
        extrapolated_sup,
        extrapolated_half_width,
        continuation,
        unit_mass_half_width: 1.0 / (2.0 * sup),
    };
    Ok(PotentialSolution {
        potential,
        state,
        energy,
        regime: Regime::MaximizeSupNorm,
        residual,
        coupling_residual,
        iterations,
        local: false,
        epsilon: 0.0,
        plateau: Some(plateau),
    })
}

/// Ends of the plateau through contact nodes `s..=e`. Inside a plateau each
/// node carries the multiplier `h |f|`; an end node carries a fraction `θ`
/// of that, and the plateau is taken to cover the same fraction of its cell.
fn plateau_edges(grid: &UniformGrid, f: &[f64], multipliers: &[f64], s: usize, e: usize) -> (f64, f64) {
    let h = grid.h();
    let share = |i: usize| {
        if f[i] == 0.0 {
            1.0
        } else {
            (multipliers[i].abs() / (h * f[i].abs())).clamp(0.0, 1.0)
        }
    };
    if s == e {
        let half = 0.5 * share(s) * h;
        return (grid.node(s) - half, grid.node(s) + half);
    }
    (grid.node(s) + (0.5 - share(s)) * h, grid.node(e) - (0.5 - share(e)) * h)
}

/// `∫_a^b f` for the piecewise-linear interpolant of `f`, zero at the ends.
fn integrate_linear(grid: &UniformGrid, f: &[f64], a: f64, b: f64) -> f64 {
    let h = grid.h();
    let value = |k: usize| if k == 0 || k > f.len() { 0.0 } else { f[k - 1] };
    let at = |x: f64| {
        let t = ((x - grid.x0) / h).clamp(0.0, grid.cells as f64);
        let k = (t.floor() as usize).min(grid.cells - 1);
        let r = t - k as f64;
        value(k) * (1.0 - r) + value(k + 1) * r
    };
    let ka = ((a - grid.x0) / h).floor() as usize;
    let kb = ((b - grid.x0) / h).floor() as usize;
    if ka == kb {
        return 0.5 * (at(a) + at(b)) * (b - a);
    }
    let first = grid.x0 + (ka + 1) as f64 * h;
    let last = grid.x0 + kb as f64 * h;
    let mut total = 0.5 * (at(a) + value(ka + 1)) * (first - a) + 0.5 * (value(kb) + at(b)) * (b - last);
    for k in ka + 1..kb {
        total += 0.5 * (value(k) + value(k + 1)) * h;
    }
    total
}

/// Nodes where the continuation state is within a relative `1e-3` of its
/// sup norm, as the starting guess of the contact sets.
fn initial_contact(u: &[f64], sup: f64) -> Vec<i8> {
    u.iter()
        .map(|&x| {
            if x >= (1.0 - 1e-3) * sup {
                1
            } else if x <= -(1.0 - 1e-3) * sup {
                -1
            } else {
                0
            }
        })
        .collect()
}

/// Exact minimizer of the discrete `J_1`.
struct Contact {
    /// `M`.
    level: f64,
    u: Vec<f64>,
    /// `+1` where `u = M`, `-1` where `u = -M`, else 0.
    side: Vec<i8>,
    /// `h f - K u`, nonzero only on the contact sets.
    multipliers: Vec<f64>,
    iterations: usize,
}

/// Primal-dual active set iteration for
/// `min ½∫|u'|² + ½M² - ∫f u` subject to `-M ≤ u ≤ M`.
///
/// For fixed contact sets the optimality system is linear in `(u, M)`: rows
/// on the contact sets read `u_i = ±M`, the others `(K u)_i = h f_i`, and
/// `M` equals the total multiplier mass. Writing `u = a + M b` turns it into
/// two tridiagonal solves with one matrix.
fn solve_sup_norm_problem(grid: &UniformGrid, f: &[f64], mut side: Vec<i8>) -> Result<Contact> {
    let n = f.len();
    let h = grid.h();
    let c = 2.0 / h;
    let max_iterations = n + 10;
    for it in 0..max_iterations {
        if side.iter().all(|s| *s == 0) {
            return Err(Error::NonConvergence {
                what: "active set iteration (empty contact set)".into(),
                residual: f64::NAN,
            });
        }
        let mut diag = vec![2.0 / h; n];
        let mut lower = vec![-1.0 / h; n.saturating_sub(1)];
        let mut upper = vec![-1.0 / h; n.saturating_sub(1)];
        let mut rhs_a: Vec<f64> = f.iter().map(|f| h * f).collect();
        let mut rhs_b = vec![0.0; n];
        for i in 0..n {
            if side[i] != 0 {
                let s = side[i] as f64;
                diag[i] = 1.0;
                rhs_a[i] = 0.0;
                rhs_b[i] = s;
                if i > 0 {
                    upper[i - 1] = 0.0;
                    lower[i - 1] = 0.0;
                    if side[i - 1] == 0 {
                        rhs_b[i - 1] += s / h;
                    }
                }
                if i + 1 < n {
                    lower[i] = 0.0;
                    upper[i] = 0.0;
                    if side[i + 1] == 0 {
                        rhs_b[i + 1] += s / h;
                    }
                }
            }
        }
        let lu = TridiagonalLu::new(&lower, &diag, &upper)?;
        let a = lu.solve(&rhs_a);
        let b = lu.solve(&rhs_b);
        let k_apply = |u: &[f64], i: usize| {
            let l = if i > 0 { u[i - 1] } else { 0.0 };
            let r = if i + 1 < n { u[i + 1] } else { 0.0 };
            (2.0 * u[i] - l - r) / h
        };
        // multiplier_i = alpha_i + M beta_i on the contact set
        let (mut sa, mut sb) = (0.0, 0.0);
        for i in 0..n {
            if side[i] != 0 {
                let s = side[i] as f64;
                sa += s * (h * f[i] - k_apply(&a, i));
                sb += s * -k_apply(&b, i);
            }
        }
        let level = sa / (1.0 - sb);
        let u: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + level * b).collect();
        let mut multipliers = vec![0.0; n];
        let mut next = vec![0i8; n];
        for i in 0..n {
            if side[i] != 0 {
                multipliers[i] = h * f[i] - k_apply(&u, i);
            }
            let lambda = multipliers[i];
            next[i] = if lambda + c * (u[i] - level) > 0.0 {
                1
            } else if lambda + c * (u[i] + level) < 0.0 {
                -1
            } else {
                0
            };
        }
        if next == side {
            return Ok(Contact {
                level,
                u,
                side,
                multipliers,
                iterations: it + 1,
            });
        }
        side = next;
    }
    Err(Error::NonConvergence {
        what: "active set iteration".into(),
        residual: f64::NAN,
    })
}

/// One row of the nonexistence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub n: usize,
    /// Spike height.
    pub height: f64,
    /// Spike width.
    pub width: f64,
    pub cells: usize,
    /// `∫V_n^p`.
    pub constraint: f64,
    /// `E_f(V_n)`.
    pub energy: f64,
}

/// Builds `n` equally spaced spikes for `n = 1, 2, 4, …` up to `n_max` (the
/// last row is `n_max` itself) and evaluates their energies.
///
/// Spike `n` has height `t = τ n^(2/(1-p))` and width `w = 1 / (n t^p)`, so
/// `∫V^p = 1` while the mass `t w` of each spike grows like `n`. `τ` is 1 on
/// intervals of length 2 and is chosen in general so that a spike fills at
/// most half of its slot. Each grid resolves a spike with at least four
/// cells; the height is then recomputed from the number of nodes the spike
/// covers so the constraint holds on the grid.
pub fn nonexistence_demo(
    source: &SourceTerm,
    p: f64,
    n_max: usize,
    x0: f64,
    x1: f64,
) -> Result<Vec<DemoRow>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("the demo needs 0 < p < 1, got {p}")));
    }
    if n_max < 2 {
        return Err(Error::InvalidArgument(format!("n_max must be at least 2, got {n_max}")));
    }
    if !(x1 > x0) {
        return Err(Error::InvalidArgument(format!("empty interval ({x0}, {x1})")));
    }
    let length = x1 - x0;
    let tau = (2.0 / length).powf(1.0 / p).max(1.0);
    let mut ns: Vec<usize> = std::iter::successors(Some(1usize), |n| n.checked_mul(2))
        .take_while(|&n| n < n_max)
        .collect();
    ns.push(n_max);
    let mut rows = Vec::with_capacity(ns.len());
    for n in ns {
        let t = tau * (n as f64).powf(2.0 / (1.0 - p));
        let w = 1.0 / (n as f64 * t.powf(p));
        let per_slot = ((4.0 * length / (n as f64 * w)).ceil() as usize).max(MIN_DEMO_CELLS.div_ceil(n));
        let cells = n.saturating_mul(per_slot);
        if cells > MAX_DEMO_CELLS {
            return Err(Error::GridTooCoarse {
                width: w,
                required: cells,
                max: MAX_DEMO_CELLS,
            });
        }
        let grid = UniformGrid::new(x0, x1, cells)?;
        let h = grid.h();
        let k = ((w / h).round() as usize).clamp(1, per_slot - 1);
        let height = (1.0 / (n as f64 * k as f64 * h)).powf(1.0 / p);
        let mut values = vec![0.0; grid.len()];
        for j in 0..n {
            // Interior index of global node g is g - 1.
            let first = j * per_slot + (per_slot - k) / 2;
            for g in first..first + k {
                values[g.max(1) - 1] = height;
            }
        }
        let potential = GridPotential::new(grid, values, p)?;
        let f = source.sample(&grid)?;
        let (energy, _) = dirichlet_energy(&f, &potential)?;
        rows.push(DemoRow {
            n,
            height,
            width: k as f64 * h,
            cells,
            constraint: potential.constraint,
            energy,
        });
    }
    Ok(rows)
}
