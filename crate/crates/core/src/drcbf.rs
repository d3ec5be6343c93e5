//! Disturbance-rejection barrier cascades with a known disturbance bound, and
//! the nominal high-order barrier baseline.
//!
//! Each level replaces the unknown term `L_h b̃_{i-1} · d` by its worst case
//! under `‖d‖ ≤ 𝒟`, relaxed through Young's inequality
//! `𝒟‖v‖ ≤ ‖v‖²/(4k) + k𝒟²` so the level stays differentiable:
//!
//! ```text
//! w̃_i = L_f b̃_{i-1} − ‖L_h b̃_{i-1}‖² / (4 k_i)
//! b̃_i = w̃_i − k_i 𝒟²                     (i < m)
//! φ̃_i = b̃_i + Σ_{j<i} c_j^i b̃_j
//! ```
//!
//! and the control enters only through `β_u = L_g b̃_{m-1}` in
//! `w̃_m + β_u u + Σ_{j<m} c_j^m b̃_j ≥ k_m 𝒟²`.

use crate::constraint::AffineControlConstraint;
use crate::error::{Error, Result};
use crate::field::{
    derive_field, verify_relative_degree, Channel, ControlAffineSystem, FieldExpr,
    SmoothScalarField, StateVector,
};
use crate::poles::CoefficientTable;

/// Control rows with a smaller Euclidean norm are treated as degenerate.
pub const DEGENERATE_ROW_THRESHOLD: f64 = 1e-12;

/// Result of a safe-set membership query.
#[derive(Debug, Clone, PartialEq)]
pub struct Membership {
    pub in_set: bool,
    /// Level values `φ_0(x) .. φ_{m-1}(x)`.
    pub values: Vec<f64>,
}

/// `‖v‖²/(4k) + k𝒟²`, the smooth upper bound on `𝒟‖v‖`.
pub fn young_bound(norm_v: f64, k: f64, bound: f64) -> f64 {
    norm_v * norm_v / (4.0 * k) + k * bound * bound
}

/// Worst-case level penalty `ρ(k) = η²/(4k) + k𝒟²` for a known bound `η`.
pub fn worst_case_penalty(eta: f64, k: f64, bound: f64) -> f64 {
    young_bound(eta, k, bound)
}

/// Least-conservative gains `k*_i = η_i / (2𝒟)`.
pub fn optimal_k(eta: &[f64], bound: f64) -> Result<Vec<f64>> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "disturbance bound must be positive, got {bound}"
        )));
    }
    if eta.is_empty() {
        return Err(Error::InvalidParameter("eta is empty".into()));
    }
    eta.iter()
        .map(|&e| {
            if e > 0.0 && e.is_finite() {
                Ok(e / (2.0 * bound))
            } else {
                Err(Error::InvalidParameter(format!(
                    "eta must be positive, got {e}"
                )))
            }
        })
        .collect()
}

pub(crate) fn check_gains(name: &str, gains: &[f64], m: usize) -> Result<()> {
    if gains.len() != m {
        return Err(Error::InvalidParameter(format!(
            "expected {m} gains {name}, got {}",
            gains.len()
        )));
    }
    if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "gain {name} = {g} must be strictly positive"
        )));
    }
    Ok(())
}

pub(crate) fn check_relative_degree(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    samples: &[StateVector],
) -> Result<bool> {
    if coeffs.order() != system.ird_m() {
        return Err(Error::InvalidParameter(format!(
            "coefficient table has order {}, system declares m = {}",
            coeffs.order(),
            system.ird_m()
        )));
    }
    let report = verify_relative_degree(system, b, samples)?;
    if !report.ird_ok {
        return Err(Error::RelativeDegree(format!("{:?}", report.witnesses)));
    }
    Ok(report.drd_ok)
}

/// One robust level: `L_f F − ‖L_h F‖²/(4k)`.
pub(crate) fn robust_drift(
    system: &ControlAffineSystem,
    field: &SmoothScalarField,
    k: f64,
) -> Result<SmoothScalarField> {
    derive_field(FieldExpr::Linear {
        terms: vec![
            (1.0, field.lie(system, Channel::Drift, 0)?),
            (
                -1.0 / (4.0 * k),
                field.squared_lie_norm(system, Channel::Disturbance)?,
            ),
        ],
        constant: 0.0,
    })
}

pub(crate) fn weighted_levels(
    coeffs: &CoefficientTable,
    i: usize,
    levels: &[SmoothScalarField],
) -> Result<SmoothScalarField> {
    let mut terms = vec![(1.0, levels[i].clone())];
    for (j, level) in levels.iter().enumerate().take(i) {
        terms.push((coeffs.c(i, j), level.clone()));
    }
    derive_field(FieldExpr::Linear {
        terms,
        constant: 0.0,
    })
}

pub(crate) fn input_row(fields: &[SmoothScalarField], x: &[f64]) -> Result<Vec<f64>> {
    let row = fields
        .iter()
        .map(|f| f.value(x))
        .collect::<Result<Vec<_>>>()?;
    let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm < DEGENERATE_ROW_THRESHOLD {
        return Err(Error::DegenerateConstraint {
            norm,
            threshold: DEGENERATE_ROW_THRESHOLD,
        });
    }
    Ok(row)
}

/// Disturbance-rejection cascade for a known bound `𝒟`.
#[derive(Debug, Clone)]
pub struct DrcbfChain {
    system: ControlAffineSystem,
    b: SmoothScalarField,
    coeffs: CoefficientTable,
    k: Vec<f64>,
    bound: f64,
    tilde_b: Vec<SmoothScalarField>,
    w: Vec<SmoothScalarField>,
    beta_u: Vec<SmoothScalarField>,
    phi: Vec<SmoothScalarField>,
    drd_ok: bool,
}

/// Builds `b̃_0..b̃_{m-1}`, `w̃_1..w̃_m`, `β_u` and `φ̃_0..φ̃_{m-1}`.
///
/// `samples` are used to verify the declared input relative degree of `b`.
pub fn build_drcbf_chain(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    k: &[f64],
    bound: f64,
    samples: &[StateVector],
) -> Result<DrcbfChain> {
    let m = system.ird_m();
    check_gains("k", k, m)?;
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "disturbance bound must be nonnegative, got {bound}"
        )));
    }
    let drd_ok = check_relative_degree(system, b, coeffs, samples)?;

    let bound_sq = bound * bound;
    let mut tilde_b = vec![b.clone()];
    let mut w = Vec::with_capacity(m);
    for i in 1..=m {
        let wi = robust_drift(system, &tilde_b[i - 1], k[i - 1])?.relabel(&format!("w{i}"));
        if i < m {
            let bi = derive_field(FieldExpr::Linear {
                terms: vec![(1.0, wi.clone())],
                constant: -k[i - 1] * bound_sq,
            })?
            .relabel(&format!("tilde_b{i}"));
            tilde_b.push(bi);
        }
        w.push(wi);
    }

    let last = &tilde_b[m - 1];
    let beta_u = (0..system.p())
        .map(|j| last.lie(system, Channel::Input, j))
        .collect::<Result<Vec<_>>>()?;

    let mut phi = vec![b.clone()];
    for i in 1..m {
        phi.push(weighted_levels(coeffs, i, &tilde_b)?.relabel(&format!("phi{i}")));
    }

    Ok(DrcbfChain {
        system: system.clone(),
        b: b.clone(),
        coeffs: coeffs.clone(),
        k: k.to_vec(),
        bound,
        tilde_b,
        w,
        beta_u,
        phi,
        drd_ok,
    })
}

impl DrcbfChain {
    pub fn order(&self) -> usize {
        self.tilde_b.len()
    }
    pub fn system(&self) -> &ControlAffineSystem {
        &self.system
    }
    pub fn barrier(&self) -> &SmoothScalarField {
        &self.b
    }
    pub fn coefficients(&self) -> &CoefficientTable {
        &self.coeffs
    }
    pub fn gains(&self) -> &[f64] {
        &self.k
    }
    pub fn bound(&self) -> f64 {
        self.bound
    }
    /// `b̃_0 .. b̃_{m-1}`
    pub fn tilde_b(&self) -> &[SmoothScalarField] {
        &self.tilde_b
    }
    /// `w̃_1 .. w̃_m`
    pub fn w(&self) -> &[SmoothScalarField] {
        &self.w
    }
    pub fn w_m(&self) -> &SmoothScalarField {
        self.w.last().unwrap()
    }
    /// Components of `β_u = L_g b̃_{m-1}`.
    pub fn beta_u_fields(&self) -> &[SmoothScalarField] {
        &self.beta_u
    }
    /// `φ̃_0 .. φ̃_{m-1}`
    pub fn phi(&self) -> &[SmoothScalarField] {
        &self.phi
    }
    /// Whether the sampled disturbance relative degree matched the declaration.
    pub fn drd_verified(&self) -> bool {
        self.drd_ok
    }

    pub fn beta_u(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.beta_u.iter().map(|f| f.value(x)).collect()
    }

    pub fn phi_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.phi.iter().map(|f| f.value(x)).collect()
    }

    /// All fields the chain constructed, for derivative audits.
    pub fn fields(&self) -> Vec<&SmoothScalarField> {
        self.tilde_b
            .iter()
            .chain(&self.w)
            .chain(&self.beta_u)
            .chain(&self.phi)
            .collect()
    }
}

/// `β_u(x) u ≥ k_m 𝒟² − w̃_m(x) − Σ_{j<m} c_j^m b̃_j(x)`.
pub fn drcbf_constraint(chain: &DrcbfChain, x: &[f64]) -> Result<AffineControlConstraint> {
    let m = chain.order();
    let row = input_row(&chain.beta_u, x)?;
    let mut offset = chain.k[m - 1] * chain.bound * chain.bound - chain.w_m().value(x)?;
    for (j, level) in chain.tilde_b.iter().enumerate() {
        offset -= chain.coeffs.c(m, j) * level.value(x)?;
    }
    Ok(AffineControlConstraint::at_least(row, offset))
}

/// `x` is in the closed set `{φ̃_i ≥ 0 ∀i}`.
pub fn chain_membership(chain: &DrcbfChain, x: &[f64]) -> Result<Membership> {
    let values = chain.phi_values(x)?;
    Ok(Membership {
        in_set: values.iter().all(|v| *v >= 0.0),
        values,
    })
}

/// Nominal high-order barrier with linear class-K terms; ignores `h`.
///
/// `ϑ_i = L_f^i b + Σ_{j<i} c_j^i L_f^j b`, constraint
/// `L_g L_f^{m-1} b · u ≥ −L_f^m b − Σ_{j<m} c_j^m L_f^j b`.
#[derive(Debug, Clone)]
pub struct HocbfChain {
    system: ControlAffineSystem,
    coeffs: CoefficientTable,
    derivs: Vec<SmoothScalarField>,
    top: SmoothScalarField,
    beta_u: Vec<SmoothScalarField>,
    theta: Vec<SmoothScalarField>,
}

pub fn build_hocbf_chain(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    samples: &[StateVector],
) -> Result<HocbfChain> {
    check_relative_degree(system, b, coeffs, samples)?;
    let m = system.ird_m();
    let mut derivs = vec![b.clone()];
    for _ in 1..m {
        let next = derivs.last().unwrap().lie(system, Channel::Drift, 0)?;
        derivs.push(next);
    }
    let last = &derivs[m - 1];
    let top = last.lie(system, Channel::Drift, 0)?;
    let beta_u = (0..system.p())
        .map(|j| last.lie(system, Channel::Input, j))
        .collect::<Result<Vec<_>>>()?;
    let mut theta = vec![b.clone()];
    for i in 1..m {
        theta.push(weighted_levels(coeffs, i, &derivs)?.relabel(&format!("theta{i}")));
    }
    Ok(HocbfChain {
        system: system.clone(),
        coeffs: coeffs.clone(),
        derivs,
        top,
        beta_u,
        theta,
    })
}

impl HocbfChain {
    pub fn order(&self) -> usize {
        self.derivs.len()
    }
    pub fn system(&self) -> &ControlAffineSystem {
        &self.system
    }
    /// `ϑ_0 .. ϑ_{m-1}`
    pub fn theta(&self) -> &[SmoothScalarField] {
        &self.theta
    }
    pub fn theta_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.theta.iter().map(|f| f.value(x)).collect()
    }
    pub fn fields(&self) -> Vec<&SmoothScalarField> {
        self.derivs
            .iter()
            .chain(std::iter::once(&self.top))
            .chain(&self.beta_u)
            .chain(&self.theta)
            .collect()
    }

    pub fn constraint(&self, x: &[f64]) -> Result<AffineControlConstraint> {
        let m = self.order();
        let row = input_row(&self.beta_u, x)?;
        let mut offset = -self.top.value(x)?;
        for (j, level) in self.derivs.iter().enumerate() {
            offset -= self.coeffs.c(m, j) * level.value(x)?;
        }
        Ok(AffineControlConstraint::at_least(row, offset))
    }

    pub fn membership(&self, x: &[f64]) -> Result<Membership> {
        let values = self.theta_values(x)?;
        Ok(Membership {
            in_set: values.iter().all(|v| *v >= 0.0),
            values,
        })
    }
}

/// One-shot nominal constraint at `x`.
pub fn hocbf_constraint(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    x: &[f64],
) -> Result<AffineControlConstraint> {
    build_hocbf_chain(system, b, coeffs, &[])?.constraint(x)
}

/// Estimates `η_i = max_x ‖L_h b̃_{i-1}(x)‖` over `samples` and sets each
/// `k_i = η_i/(2𝒟)` before building the next level, since `b̃_i` depends on
/// `k_i`.
pub fn estimate_optimal_gains(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    bound: f64,
    samples: &[StateVector],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "eta estimation needs at least one state sample".into(),
        ));
    }
    let m = system.ird_m();
    let mut level = b.clone();
    let mut etas = Vec::with_capacity(m);
    let mut gains = Vec::with_capacity(m);
    for i in 0..m {
        let norm_sq = level.squared_lie_norm(system, Channel::Disturbance)?;
        let mut eta: f64 = 0.0;
        for x in samples {
            eta = eta.max(norm_sq.value(x)?.sqrt());
        }
        let k = optimal_k(&[eta], bound)?[0];
        etas.push(eta);
        gains.push(k);
        if i + 1 < m {
            level = derive_field(FieldExpr::Linear {
                terms: vec![(1.0, robust_drift(system, &level, k)?)],
                constant: -k * bound * bound,
            })?;
        }
    }
    Ok((etas, gains))
}
