//! Adaptive disturbance-rejection cascades that need no disturbance bound.
//!
//! The constant `𝒟²` of the bounded cascade is replaced by a state-dependent
//! energy `Γ_i = r_i B(φ̃_i)` that diverges on the boundary of each level set:
//!
//! ```text
//! π̃_i = L_f ψ̃_{i-1} − ‖L_h ψ̃_{i-1}‖² / (4 k_i)
//! ψ̃_i = π̃_i − k_i Γ_{i-1}                 (i < m)
//! φ̃_i = ψ̃_i + Σ_{j<i} c_j^i ψ̃_j
//! ```
//!
//! with the control constraint
//! `π̃_m + β̃_u u + Σ_{j<m} c_j^m ψ̃_j ≥ k_m Γ_{m-1}`, `β̃_u = L_g ψ̃_{m-1}`.

use std::fmt;
use std::sync::Arc;

use crate::constraint::AffineControlConstraint;
use crate::drcbf::{check_gains, check_relative_degree, input_row, robust_drift, weighted_levels};
use crate::error::{Error, Result};
use crate::field::{
    derive_field, lie_g, Channel, ControlAffineSystem, FieldEval, FieldExpr, Provenance,
    SmoothScalarField, StateVector, DEFAULT_RECIPROCAL_GUARD,
};
use crate::jet::Jet;
use crate::poles::CoefficientTable;

/// Energy-like map `B: (0, ∞) → [0, ∞)` bounded between `1/α̌_1` and `1/α̌_2`
/// for class-K `α̌`, so `B(φ) → ∞` as `φ → 0⁺`.
pub trait BarrierEnergy: Send + Sync + fmt::Debug {
    /// `B^(k)(φ)` for `k = 0..=order`.
    fn derivatives(&self, phi: f64, order: usize) -> Vec<f64>;

    fn value(&self, phi: f64) -> f64 {
        self.derivatives(phi, 0)[0]
    }

    fn derivative(&self, phi: f64) -> f64 {
        self.derivatives(phi, 1)[1]
    }
}

/// `B(φ) = 1/φ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReciprocalEnergy;

impl BarrierEnergy for ReciprocalEnergy {
    fn derivatives(&self, phi: f64, order: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(order + 1);
        let mut term = 1.0 / phi;
        for k in 0..=order {
            out.push(term);
            term *= -((k + 1) as f64) / phi;
        }
        out
    }
}

/// `r · B(F)` with a guard on `F`. In clamped mode the energy is evaluated at
/// `max(F, guard)` instead of failing.
struct EnergyNode {
    inner: SmoothScalarField,
    energy: Arc<dyn BarrierEnergy>,
    gain: f64,
    guard: f64,
    clamp: bool,
}

impl FieldEval for EnergyNode {
    fn eval(&self, x: &[f64], order: usize) -> Result<Jet> {
        let jet = self.inner.jet(x, order)?;
        let mut base = jet.value();
        if base <= self.guard {
            if !self.clamp {
                return Err(Error::Guard {
                    value: base,
                    guard: self.guard,
                });
            }
            base = self.guard;
        }
        let derivs = self.energy.derivatives(base, order);
        Ok(jet.with_value(base).compose(&derivs) * self.gain)
    }
}

fn energy_field(
    inner: &SmoothScalarField,
    energy: &Arc<dyn BarrierEnergy>,
    gain: f64,
    guard: f64,
    clamp: bool,
    label: &str,
) -> SmoothScalarField {
    SmoothScalarField::from_node(
        inner.dim(),
        Provenance::AlgebraicComposite,
        label,
        Arc::new(EnergyNode {
            inner: inner.clone(),
            energy: energy.clone(),
            gain,
            guard,
            clamp,
        }),
    )
}

#[derive(Debug, Clone)]
struct Levels {
    psi: Vec<SmoothScalarField>,
    pi: Vec<SmoothScalarField>,
    gamma: Vec<SmoothScalarField>,
    phi: Vec<SmoothScalarField>,
    beta_u: Vec<SmoothScalarField>,
}

#[derive(Debug, Clone)]
pub struct AdrcbfChain {
    system: ControlAffineSystem,
    coeffs: CoefficientTable,
    k: Vec<f64>,
    r: Vec<f64>,
    guard: f64,
    strict: Levels,
    clamped: Levels,
}

/// Result of an open-set membership query.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorMembership {
    pub in_open_set: bool,
    pub values: Vec<f64>,
    pub min_margin: f64,
}

#[allow(clippy::too_many_arguments)]
fn build_levels(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    k: &[f64],
    r: &[f64],
    energy: &Arc<dyn BarrierEnergy>,
    guard: f64,
    clamp: bool,
) -> Result<Levels> {
    let m = system.ird_m();
    let mut psi = vec![b.clone()];
    let mut phi = vec![b.clone()];
    let mut gamma = vec![energy_field(b, energy, r[0], guard, clamp, "gamma0")];
    let mut pi = Vec::with_capacity(m);
    for i in 1..=m {
        let pi_i = robust_drift(system, &psi[i - 1], k[i - 1])?.relabel(&format!("pi{i}"));
        if i < m {
            let psi_i = derive_field(FieldExpr::Linear {
                terms: vec![(1.0, pi_i.clone()), (-k[i - 1], gamma[i - 1].clone())],
                constant: 0.0,
            })?
            .relabel(&format!("psi{i}"));
            psi.push(psi_i);
            let phi_i = weighted_levels(coeffs, i, &psi)?.relabel(&format!("phi{i}"));
            gamma.push(energy_field(
                &phi_i,
                energy,
                r[i],
                guard,
                clamp,
                &format!("gamma{i}"),
            ));
            phi.push(phi_i);
        }
        pi.push(pi_i);
    }
    let beta_u = (0..system.p())
        .map(|j| psi[m - 1].lie(system, Channel::Input, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(Levels {
        psi,
        pi,
        gamma,
        phi,
        beta_u,
    })
}

/// Builds the adaptive cascade with the default reciprocal guard.
///
/// `samples` must be strictly interior states; they are used for the
/// relative-degree check and to confirm that no energy term feeds the control
/// row (`L_g Γ_i = 0` for `i < m − 1`).
pub fn build_adrcbf_chain(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    k: &[f64],
    r: &[f64],
    energy: Arc<dyn BarrierEnergy>,
    samples: &[StateVector],
) -> Result<AdrcbfChain> {
    build_adrcbf_chain_with_guard(
        system,
        b,
        coeffs,
        k,
        r,
        energy,
        DEFAULT_RECIPROCAL_GUARD,
        samples,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn build_adrcbf_chain_with_guard(
    system: &ControlAffineSystem,
    b: &SmoothScalarField,
    coeffs: &CoefficientTable,
    k: &[f64],
    r: &[f64],
    energy: Arc<dyn BarrierEnergy>,
    guard: f64,
    samples: &[StateVector],
) -> Result<AdrcbfChain> {
    let m = system.ird_m();
    check_gains("k", k, m)?;
    check_gains("r", r, m)?;
    if !(guard > 0.0) {
        return Err(Error::InvalidParameter("guard must be positive".into()));
    }
    check_relative_degree(system, b, coeffs, samples)?;

    let strict = build_levels(system, b, coeffs, k, r, &energy, guard, false)?;
    let clamped = build_levels(system, b, coeffs, k, r, &energy, guard, true)?;

    let chain = AdrcbfChain {
        system: system.clone(),
        coeffs: coeffs.clone(),
        k: k.to_vec(),
        r: r.to_vec(),
        guard,
        strict,
        clamped,
    };

    for x in samples {
        for field in chain.fields() {
            field.value(x)?;
        }
        for gamma in chain.strict.gamma.iter().take(m.saturating_sub(1)) {
            let row = lie_g(gamma, system, x)?;
            let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > crate::field::RELATIVE_DEGREE_TOL {
                return Err(Error::RelativeDegree(format!(
                    "energy term {} reaches the control row (|L_g| = {norm:e}) at {x:?}",
                    gamma.label()
                )));
            }
        }
    }
    Ok(chain)
}

impl AdrcbfChain {
    pub fn order(&self) -> usize {
        self.strict.psi.len()
    }
    pub fn system(&self) -> &ControlAffineSystem {
        &self.system
    }
    pub fn coefficients(&self) -> &CoefficientTable {
        &self.coeffs
    }
    pub fn k(&self) -> &[f64] {
        &self.k
    }
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    pub fn guard(&self) -> f64 {
        self.guard
    }
    /// `ψ̃_0 .. ψ̃_{m-1}`
    pub fn psi(&self) -> &[SmoothScalarField] {
        &self.strict.psi
    }
    /// `π̃_1 .. π̃_m`
    pub fn pi(&self) -> &[SmoothScalarField] {
        &self.strict.pi
    }
    pub fn pi_m(&self) -> &SmoothScalarField {
        self.strict.pi.last().unwrap()
    }
    /// `Γ_0 .. Γ_{m-1}`
    pub fn gamma(&self) -> &[SmoothScalarField] {
        &self.strict.gamma
    }
    /// `φ̃_0 .. φ̃_{m-1}`
    pub fn phi(&self) -> &[SmoothScalarField] {
        &self.strict.phi
    }
    pub fn beta_u_fields(&self) -> &[SmoothScalarField] {
        &self.strict.beta_u
    }

    pub fn fields(&self) -> Vec<&SmoothScalarField> {
        let l = &self.strict;
        l.psi
            .iter()
            .chain(&l.pi)
            .chain(&l.gamma)
            .chain(&l.phi)
            .chain(&l.beta_u)
            .collect()
    }

    /// `φ̃` values with energies clamped at the guard, so they are defined on
    /// and beyond the boundary.
    pub fn phi_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.clamped.phi.iter().map(|f| f.value(x)).collect()
    }

    /// Constraint evaluated with clamped energies; the flag reports whether
    /// any level was at or below the guard.
    pub fn constraint_clamped(&self, x: &[f64]) -> Result<(AffineControlConstraint, bool)> {
        let values = self.phi_values(x)?;
        let clamped = values.iter().any(|v| *v <= self.guard);
        Ok((constraint_from(self, &self.clamped, x)?, clamped))
    }
}

fn constraint_from(
    chain: &AdrcbfChain,
    levels: &Levels,
    x: &[f64],
) -> Result<AffineControlConstraint> {
    let m = chain.order();
    let row = input_row(&levels.beta_u, x)?;
    let mut offset =
        chain.k[m - 1] * levels.gamma[m - 1].value(x)? - levels.pi.last().unwrap().value(x)?;
    for (j, level) in levels.psi.iter().enumerate() {
        offset -= chain.coeffs.c(m, j) * level.value(x)?;
    }
    Ok(AffineControlConstraint::at_least(row, offset))
}

/// `β̃_u(x) u ≥ k_m Γ_{m-1}(x) − π̃_m(x) − Σ_{j<m} c_j^m ψ̃_j(x)`.
///
/// Requires every `φ̃_i(x)` to exceed the guard.
pub fn adrcbf_constraint(chain: &AdrcbfChain, x: &[f64]) -> Result<AffineControlConstraint> {
    for (level, field) in chain.strict.phi.iter().enumerate() {
        let value = match field.value(x) {
            Ok(v) => v,
            Err(Error::Guard { value, .. }) => {
                return Err(Error::BoundaryProximity {
                    level: level.saturating_sub(1),
                    value,
                })
            }
            Err(e) => return Err(e),
        };
        if value <= chain.guard {
            return Err(Error::BoundaryProximity { level, value });
        }
    }
    constraint_from(chain, &chain.strict, x)
}

/// `x` is in `{φ̃_i > 0 ∀i}`.
pub fn interior_membership(chain: &AdrcbfChain, x: &[f64]) -> Result<InteriorMembership> {
    let values = chain.phi_values(x)?;
    let min_margin = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(InteriorMembership {
        in_open_set: values.iter().all(|v| *v > 0.0),
        values,
        min_margin,
    })
}
