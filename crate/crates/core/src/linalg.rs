//! Small numerical kernels shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold for the dense direct solver.
pub(crate) const PIVOT_TOLERANCE: f64 = 1e-12;

/// LU factorization (no pivoting) of a tridiagonal matrix, for repeated
/// solves. Only used on symmetric positive definite or diagonally dominant
/// systems, where elimination without pivoting is stable.
#[derive(Debug, Clone)]
pub(crate) struct TridiagonalLu {
    lower: Vec<f64>,
    pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    /// `lower[i]` is entry `(i + 1, i)`, `upper[i]` is `(i, i + 1)`.
    pub(crate) fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        debug_assert!(n == 0 || (lower.len() == n - 1 && upper.len() == n - 1));
        let scale = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut pivots = Vec::with_capacity(n);
        let mut factors = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut p = diag[i];
            if i > 0 {
                let m = lower[i - 1] / pivots[i - 1];
                p -= m * upper[i - 1];
                factors.push(m);
            }
            if !(p.abs() > PIVOT_TOLERANCE * scale) {
                return Err(Error::SingularSystem { pivot: p });
            }
            pivots.push(p);
        }
        Ok(TridiagonalLu {
            lower: factors,
            pivots,
            upper: upper.to_vec(),
        })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.pivots.len();
        for i in 1..n {
            x[i] -= self.lower[i - 1] * x[i - 1];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                x[i] -= self.upper[i] * x[i + 1];
            }
            x[i] /= self.pivots[i];
        }
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Dense LU with partial pivoting; rejects pivots below the relative
/// tolerance.
pub(crate) fn dense_solve(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(b);
    }
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let lu = a.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(min_pivot > PIVOT_TOLERANCE * scale) {
        return Err(Error::SingularSystem { pivot: min_pivot });
    }
    lu.solve(&b).ok_or(Error::SingularSystem { pivot: min_pivot })
}

/// Euclidean projection of `v` onto `{w >= 0, Σw = total}` (sort-based).
pub(crate) fn project_to_simplex(v: &mut [f64], total: f64) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let t = (cumulative - total) / (i + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
pub(crate) fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
