//! Exact solver for tiny strictly convex QPs by active-set enumeration.
//!
//! Minimizes `½ zᵀQz + cᵀz` subject to `A z ≤ b`. Every subset of at most
//! `n` constraints is treated as an equality set; its KKT system is solved and
//! the candidate kept when it is primal feasible with nonnegative multipliers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraint::AffineControlConstraint;
use crate::error::{Error, Result};

/// Relative feasibility slack: `a·z ≤ b + FEAS_TOL (1 + |b|)`.
pub const FEAS_TOL: f64 = 1e-9;
/// Multipliers down to `−MULT_TOL · scale` count as nonnegative.
pub const MULT_TOL: f64 = 1e-9;
/// KKT matrices whose pivot ratio falls below this are skipped as singular.
const PIVOT_RATIO: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    q: DMatrix<f64>,
    c: DVector<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Vec<f64>,
    /// Indices of constraints treated as equalities, ascending.
    pub active_set: Vec<usize>,
    /// One multiplier per constraint, zero off the active set.
    pub multipliers: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
}

impl QpProblem {
    /// `q` is given row-major as `n` rows of length `n`.
    pub fn new(q: Vec<Vec<f64>>, c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if q.len() != n || q.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                operand: "Q",
                expected: n,
                found: q.len(),
            });
        }
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                operand: "b",
                expected: a.len(),
                found: b.len(),
            });
        }
        if let Some(row) = a.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                operand: "A row",
                expected: n,
                found: row.len(),
            });
        }
        let finite = q
            .iter()
            .flatten()
            .chain(&c)
            .chain(a.iter().flatten())
            .chain(&b);
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QP data"));
        }
        let q = DMatrix::from_fn(n, n, |i, j| q[i][j]);
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * (1.0 + q.amax()) || q.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            q,
            c: DVector::from_vec(c),
            a,
            b,
        })
    }

    /// Builds `A`, `b` from constraints over the same decision vector.
    pub fn from_constraints(
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        constraints: &[AffineControlConstraint],
    ) -> Result<Self> {
        let (a, b) = constraints.iter().map(|k| k.as_less_eq()).unzip();
        Self::new(q, c, a, b)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.a.len()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let z = DVector::from_column_slice(z);
        0.5 * z.dot(&(&self.q * &z)) + self.c.dot(&z)
    }

    /// `max_i (a_i·z − b_i)`, or `-∞` without constraints.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| dot(row, z) - bi)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `‖Qz + c + Aᵀλ‖∞`.
    pub fn stationarity_residual(&self, z: &[f64], multipliers: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let mut r = &self.q * zv + &self.c;
        for (row, l) in self.a.iter().zip(multipliers) {
            for (ri, ai) in r.iter_mut().zip(row) {
                *ri += l * ai;
            }
        }
        r.amax()
    }

    fn feasible(&self, z: &[f64]) -> bool {
        self.a
            .iter()
            .zip(&self.b)
            .all(|(row, bi)| dot(row, z) <= bi + FEAS_TOL * (1.0 + bi.abs()))
    }

    fn solve_subset(&self, subset: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let k = subset.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.q);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&self.c));
        for (r, &idx) in subset.iter().enumerate() {
            for (j, &aij) in self.a[idx].iter().enumerate() {
                kkt[(n + r, j)] = aij;
                kkt[(j, n + r)] = aij;
            }
            rhs[n + r] = self.b[idx];
        }
        let lu = kkt.full_piv_lu();
        let u = lu.u();
        let diag = u.diagonal();
        let largest = diag.amax();
        let smallest = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if largest == 0.0 || smallest <= PIVOT_RATIO * largest {
            return None;
        }
        let sol = lu.solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((
            sol.rows(0, n).iter().copied().collect(),
            sol.rows(n, k).iter().copied().collect(),
        ))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Calls `visit` for every strictly increasing index subset of `0..total`
/// with at most `max_len` elements, shortest first.
fn for_each_subset(total: usize, max_len: usize, mut visit: impl FnMut(&[usize])) {
    let mut buf = Vec::with_capacity(max_len);
    for len in 0..=max_len.min(total) {
        fn rec(
            start: usize,
            total: usize,
            len: usize,
            buf: &mut Vec<usize>,
            visit: &mut dyn FnMut(&[usize]),
        ) {
            if buf.len() == len {
                visit(buf);
                return;
            }
            for i in start..total {
                buf.push(i);
                rec(i + 1, total, len, buf, visit);
                buf.pop();
            }
        }
        rec(0, total, len, &mut buf, &mut visit);
    }
}

/// Exact minimizer by exhaustive KKT enumeration.
///
/// Equal objectives (to 1e-12 relative) are broken by the smaller `‖z‖`, then
/// by enumeration order, so repeated calls are bit-identical.
pub fn solve_qp(problem: &QpProblem) -> QpSolution {
    let n = problem.dim();
    let m = problem.n_constraints();
    let mut best: Option<QpSolution> = None;
    for_each_subset(m, n, |subset| {
        let Some((z, lambda)) = problem.solve_subset(subset) else {
            return;
        };
        let scale = 1.0 + lambda.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        if lambda.iter().any(|l| *l < -MULT_TOL * scale) || !problem.feasible(&z) {
            return;
        }
        let objective = problem.objective(&z);
        let better = match &best {
            None => true,
            Some(b) => {
                let tol = 1e-12 * (1.0 + b.objective.abs());
                objective < b.objective - tol
                    || (objective <= b.objective + tol && norm_sq(&z) < norm_sq(&b.z))
            }
        };
        if better {
            let mut multipliers = vec![0.0; m];
            for (&idx, l) in subset.iter().zip(&lambda) {
                multipliers[idx] = l.max(0.0);
            }
            best = Some(QpSolution {
                z,
                active_set: subset.to_vec(),
                multipliers,
                objective,
                status: QpStatus::Optimal,
            });
        }
    });
    best.unwrap_or_else(|| QpSolution {
        z: vec![f64::NAN; n],
        active_set: Vec::new(),
        multipliers: vec![0.0; m],
        objective: f64::NAN,
        status: QpStatus::Infeasible,
    })
}
