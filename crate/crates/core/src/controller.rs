//! CLF-CBF quadratic program: slacked tracking row plus one hard safety row.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adrcbf::AdrcbfChain;
use crate::constraint::AffineControlConstraint;
use crate::drcbf::{drcbf_constraint, DrcbfChain, HocbfChain};
use crate::error::{Error, Result};
use crate::field::{lie_f, lie_g, ControlAffineSystem, SmoothScalarField};
use crate::qp::{solve_qp, QpProblem, QpStatus};

/// Tracking Lyapunov function with decay rate `σ` and slack weight `ρ`.
#[derive(Debug, Clone)]
pub struct ClfSpec {
    pub v: SmoothScalarField,
    pub sigma: f64,
    pub slack_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Hocbf,
    Drcbf,
    Adrcbf,
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerMode::Hocbf => "hocbf",
            ControllerMode::Drcbf => "drcbf",
            ControllerMode::Adrcbf => "adrcbf",
        })
    }
}

/// The hard safety row of the QP.
#[derive(Debug, Clone)]
pub enum SafetyFilter {
    Hocbf(HocbfChain),
    Drcbf(DrcbfChain),
    Adrcbf(AdrcbfChain),
    /// No safety row; only useful for comparisons.
    Disabled,
}

impl SafetyFilter {
    pub fn mode(&self) -> Option<ControllerMode> {
        match self {
            SafetyFilter::Hocbf(_) => Some(ControllerMode::Hocbf),
            SafetyFilter::Drcbf(_) => Some(ControllerMode::Drcbf),
            SafetyFilter::Adrcbf(_) => Some(ControllerMode::Adrcbf),
            SafetyFilter::Disabled => None,
        }
    }

    /// Number of level values reported by [`SafetyFilter::levels`].
    pub fn n_levels(&self) -> usize {
        match self {
            SafetyFilter::Hocbf(c) => c.order(),
            SafetyFilter::Drcbf(c) => c.order(),
            SafetyFilter::Adrcbf(c) => c.order(),
            SafetyFilter::Disabled => 0,
        }
    }

    /// `φ_0 .. φ_{m-1}` of the active cascade (clamped energies for the
    /// adaptive one).
    pub fn levels(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            SafetyFilter::Hocbf(c) => c.theta_values(x),
            SafetyFilter::Drcbf(c) => c.phi_values(x),
            SafetyFilter::Adrcbf(c) => c.phi_values(x),
            SafetyFilter::Disabled => Ok(Vec::new()),
        }
    }

    /// Whether `x` lies in the set the cascade renders invariant.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(match self {
            SafetyFilter::Hocbf(c) => c.membership(x)?.in_set,
            SafetyFilter::Drcbf(c) => crate::drcbf::chain_membership(c, x)?.in_set,
            SafetyFilter::Adrcbf(c) => crate::adrcbf::interior_membership(c, x)?.in_open_set,
            SafetyFilter::Disabled => true,
        })
    }

    /// Safety row over `u` and whether a guard clamp was needed.
    pub fn constraint(&self, x: &[f64]) -> Result<Option<(AffineControlConstraint, bool)>> {
        Ok(match self {
            SafetyFilter::Hocbf(c) => Some((c.constraint(x)?, false)),
            SafetyFilter::Drcbf(c) => Some((drcbf_constraint(c, x)?, false)),
            SafetyFilter::Adrcbf(c) => Some(c.constraint_clamped(x)?),
            SafetyFilter::Disabled => None,
        })
    }
}

pub type LinearCostMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// `J(x, u) = uᵀHu + F(x)u`.
#[derive(Clone)]
pub struct QuadraticCost {
    pub h: Vec<Vec<f64>>,
    pub linear: LinearCostMap,
}

impl fmt::Debug for QuadraticCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadraticCost")
            .field("h", &self.h)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct ControllerSpec {
    pub system: ControlAffineSystem,
    pub filter: SafetyFilter,
    pub clf: ClfSpec,
    pub cost: QuadraticCost,
    pub control_period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    /// Safety row residual at the returned control; `None` without a filter.
    pub cbf_residual: Option<f64>,
    /// CLF row residual at `(u, δ)`.
    pub clf_residual: f64,
    pub phi: Vec<f64>,
    pub guard_event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: Vec<f64>,
    pub slack: f64,
    pub status: QpStatus,
    pub audit: StepAudit,
}

/// `L_gV u − δ ≤ −σV − L_fV` over the decision vector `(u, δ)`.
pub fn clf_constraint(
    clf: &ClfSpec,
    system: &ControlAffineSystem,
    x: &[f64],
) -> Result<AffineControlConstraint> {
    let v = clf.v.value(x)?;
    let lf = lie_f(&clf.v, system, x)?;
    let mut row = lie_g(&clf.v, system, x)?;
    row.push(-1.0);
    Ok(AffineControlConstraint::at_most(row, -clf.sigma * v - lf))
}

/// Builds and solves the QP at `x`. The time argument is unused by the
/// time-invariant controllers shipped here.
pub fn control_step(spec: &ControllerSpec, x: &[f64], _t: f64) -> Result<ControlOutput> {
    let p = spec.system.p();
    if spec.cost.h.len() != p || spec.cost.h.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch {
            operand: "H",
            expected: p,
            found: spec.cost.h.len(),
        });
    }
    let f = (spec.cost.linear)(x);
    if f.len() != p {
        return Err(Error::DimensionMismatch {
            operand: "F",
            expected: p,
            found: f.len(),
        });
    }
    if !(spec.clf.slack_weight > 0.0) {
        return Err(Error::InvalidParameter(
            "slack weight must be positive".into(),
        ));
    }

    let mut q = vec![vec![0.0; p + 1]; p + 1];
    for (i, row) in spec.cost.h.iter().enumerate() {
        for (j, hij) in row.iter().enumerate() {
            q[i][j] = 2.0 * hij;
        }
    }
    q[p][p] = 2.0 * spec.clf.slack_weight;
    let mut c = f;
    c.push(0.0);

    let clf_row = clf_constraint(&spec.clf, &spec.system, x)?;
    let safety = spec.filter.constraint(x)?;
    let mut rows = vec![clf_row.clone()];
    let mut guard_event = false;
    if let Some((cbf, clamped)) = &safety {
        rows.push(cbf.lifted(1));
        guard_event = *clamped;
    }
    let problem = QpProblem::from_constraints(q, c, &rows)?;
    let sol = solve_qp(&problem);
    let phi = spec.filter.levels(x)?;

    if sol.status == QpStatus::Infeasible {
        return Ok(ControlOutput {
            u: vec![f64::NAN; p],
            slack: f64::NAN,
            status: sol.status,
            audit: StepAudit {
                cbf_residual: None,
                clf_residual: f64::NAN,
                phi,
                guard_event,
            },
        });
    }
    let u = sol.z[..p].to_vec();
    let slack = sol.z[p];
    Ok(ControlOutput {
        audit: StepAudit {
            cbf_residual: safety.map(|(c, _)| c.residual(&u)),
            clf_residual: clf_row.residual(&sol.z),
            phi,
            guard_event,
        },
        u,
        slack,
        status: sol.status,
    })
}
