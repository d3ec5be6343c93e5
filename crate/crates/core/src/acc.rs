//! Adaptive cruise control benchmark: a follower keeping distance behind a
//! lead vehicle at constant speed.
//!
//! State `x = (D, v_f)`:
//!
//! ```text
//! Ḋ   = v_l − v_f + d_u
//! v̇_f = (u − F_r(v_f)) / M + d_m,   F_r = f0 + f1 v + f2 v²
//! ```

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adrcbf::{build_adrcbf_chain, ReciprocalEnergy};
use crate::controller::{ClfSpec, ControllerMode, ControllerSpec, QuadraticCost, SafetyFilter};
use crate::disturbance::{nominal_bound, SignalSpec, SignalTerm, WaveKind};
use crate::drcbf::{build_drcbf_chain, build_hocbf_chain, estimate_optimal_gains, optimal_k};
use crate::error::{Error, Result};
use crate::field::{ControlAffineSystem, SmoothScalarField, StateVector};
use crate::jet::Jet;
use crate::poles::{coefficients_from_poles, CoefficientTable, PoleSet};
use crate::sim::SimulationConfig;

/// Operating region used for sampling: `D ∈ [10.5, 200]`, `v_f ∈ [0, 40]`.
pub const OPERATING_DISTANCE: (f64, f64) = (10.5, 200.0);
pub const OPERATING_SPEED: (f64, f64) = (0.0, 40.0);

/// Seed shared by the case configurations.
pub const CASE_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccParameters {
    pub mass: f64,
    pub v_lead: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub d_min: f64,
    pub v_desired: f64,
    pub sigma: f64,
    pub rho: f64,
    pub poles: Vec<f64>,
    pub k: Vec<f64>,
    pub r: Vec<f64>,
    pub x0: Vec<f64>,
    /// When false the disturbance map is zero (`h ≡ 0`).
    pub disturbance_inputs: bool,
}

impl Default for AccParameters {
    fn default() -> Self {
        Self {
            mass: 1650.0,
            v_lead: 20.0,
            f0: 0.1,
            f1: 5.0,
            f2: 0.25,
            d_min: 10.0,
            v_desired: 35.0,
            sigma: 10.0,
            rho: 2.0,
            poles: vec![5.0, 10.0],
            k: vec![0.1, 0.1],
            r: vec![1.0, 1.0],
            x0: vec![100.0, 13.89],
            disturbance_inputs: true,
        }
    }
}

impl AccParameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("f0", self.f0),
            ("f1", self.f1),
            ("f2", self.f2),
            ("sigma", self.sigma),
            ("rho", self.rho),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} must be positive"
            )));
        }
        if !(self.v_lead.is_finite() && self.d_min.is_finite() && self.v_desired.is_finite()) {
            return Err(Error::NonFinite("ACC parameters"));
        }
        for (name, list) in [
            ("poles", &self.poles),
            ("k", &self.k),
            ("r", &self.r),
            ("x0", &self.x0),
        ] {
            if list.len() != 2 {
                return Err(Error::InvalidParameter(format!(
                    "{name} needs 2 entries, got {}",
                    list.len()
                )));
            }
        }
        if !(self.x0[0] > self.d_min) {
            return Err(Error::InvalidParameter(format!(
                "initial distance {} must exceed d_min = {}",
                self.x0[0], self.d_min
            )));
        }
        PoleSet::new(self.poles.clone())?;
        Ok(())
    }

    /// `F_r(v) = f0 + f1 v + f2 v²`.
    pub fn drag(&self, v: f64) -> f64 {
        self.f0 + self.f1 * v + self.f2 * v * v
    }

    pub fn coefficients(&self) -> Result<CoefficientTable> {
        Ok(coefficients_from_poles(&PoleSet::new(self.poles.clone())?))
    }
}

fn drag_jet(p: &AccParameters, v: &Jet) -> Jet {
    v.square() * p.f2 + v * p.f1 + p.f0
}

pub fn acc_system(params: &AccParameters) -> Result<ControlAffineSystem> {
    params.validate()?;
    let p = params.clone();
    let inv_m = 1.0 / params.mass;
    let h_gain = if params.disturbance_inputs { 1.0 } else { 0.0 };
    ControlAffineSystem::new(
        2,
        1,
        2,
        Arc::new(move |x: &[Jet]| vec![-&x[1] + p.v_lead, drag_jet(&p, &x[1]) * (-1.0 / p.mass)]),
        Arc::new(move |x: &[Jet]| vec![vec![x[0].constant(0.0)], vec![x[0].constant(inv_m)]]),
        Arc::new(move |x: &[Jet]| {
            vec![
                vec![x[0].constant(h_gain), x[0].constant(0.0)],
                vec![x[0].constant(0.0), x[0].constant(h_gain)],
            ]
        }),
        2,
        1,
    )
}

/// `b(x) = D − D_min`.
pub fn acc_barrier(params: &AccParameters) -> SmoothScalarField {
    let d_min = params.d_min;
    SmoothScalarField::from_fn(2, "b", move |x| &x[0] - d_min)
}

/// `V(x) = (v_f − v_d)²`.
pub fn acc_clf(params: &AccParameters) -> ClfSpec {
    let v_d = params.v_desired;
    ClfSpec {
        v: SmoothScalarField::from_fn(2, "V", move |x| (&x[1] - v_d).square()),
        sigma: params.sigma,
        slack_weight: params.rho,
    }
}

/// `H = 2/M²`, `F(x) = −2 F_r(v_f)/M²`.
pub fn acc_cost(params: &AccParameters) -> QuadraticCost {
    let p = params.clone();
    let m2 = params.mass * params.mass;
    QuadraticCost {
        h: vec![vec![2.0 / m2]],
        linear: Arc::new(move |x: &[f64]| vec![-2.0 * p.drag(x[1]) / (p.mass * p.mass)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrcbfClosedForm {
    pub w1: f64,
    pub w2: f64,
    pub tilde_b1: f64,
    /// `β_u = −1/M`.
    pub row: f64,
    /// Right-hand side of `β_u u ≥ offset` from the cascade.
    pub offset: f64,
    /// Same row with the lumped penalty `(k_1 + k_2)𝒟²` in place of
    /// `(c_1^2 k_1 + k_2)𝒟²`.
    pub offset_lumped: f64,
}

/// Hand-derived DRCBF terms for the ACC model; a test oracle.
pub fn closed_form_drcbf_terms(
    params: &AccParameters,
    bound: f64,
    x: &[f64],
) -> Result<DrcbfClosedForm> {
    let coeffs = params.coefficients()?;
    let (k1, k2) = (params.k[0], params.k[1]);
    let (d, v) = (x[0], x[1]);
    let b = d - params.d_min;
    let w1 = params.v_lead - v - 1.0 / (4.0 * k1);
    let w2 = params.drag(v) / params.mass - 1.0 / (4.0 * k2);
    let tilde_b1 = w1 - k1 * bound * bound;
    let (c0, c1) = (coeffs.c(2, 0), coeffs.c(2, 1));
    let base = -w2 - c0 * b - c1 * w1;
    Ok(DrcbfClosedForm {
        w1,
        w2,
        tilde_b1,
        row: -1.0 / params.mass,
        offset: base + (c1 * k1 + k2) * bound * bound,
        offset_lumped: base + (k1 + k2) * bound * bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdrcbfClosedForm {
    pub pi1: f64,
    pub gamma0: f64,
    pub psi1: f64,
    pub phi1: f64,
    pub pi2: f64,
    pub gamma1: f64,
    pub row: f64,
    pub offset: f64,
}

/// Hand-derived adaptive terms for the ACC model; a test oracle.
pub fn closed_form_adrcbf_terms(params: &AccParameters, x: &[f64]) -> Result<AdrcbfClosedForm> {
    let coeffs = params.coefficients()?;
    let (k1, k2) = (params.k[0], params.k[1]);
    let (r0, r1) = (params.r[0], params.r[1]);
    let (d, v) = (x[0], x[1]);
    let b = d - params.d_min;
    if !(b > 0.0) {
        return Err(Error::BoundaryProximity { level: 0, value: b });
    }
    let gamma0 = r0 / b;
    let pi1 = params.v_lead - v - 1.0 / (4.0 * k1);
    let psi1 = pi1 - k1 * gamma0;
    let phi1 = coeffs.c(1, 0) * b + coeffs.c(1, 1) * psi1;
    if !(phi1 > 0.0) {
        return Err(Error::BoundaryProximity {
            level: 1,
            value: phi1,
        });
    }
    let gamma1 = r1 / phi1;
    let pi2 = params.drag(v) / params.mass - 1.0 / (4.0 * k2)
        + k1 * r0 * (params.v_lead - v) / (b * b)
        - k1 * k1 * r0 * r0 / (4.0 * k2 * b.powi(4));
    let offset = k2 * gamma1 - pi2 - coeffs.c(2, 0) * b - coeffs.c(2, 1) * psi1;
    Ok(AdrcbfClosedForm {
        pi1,
        gamma0,
        psi1,
        phi1,
        pi2,
        gamma1,
        row: -1.0 / params.mass,
        offset,
    })
}

/// `n × n` grid over the operating region.
pub fn operating_samples(n: usize) -> Vec<StateVector> {
    let lerp = |(a, b): (f64, f64), i: usize| a + (b - a) * i as f64 / (n.max(2) - 1) as f64;
    (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| vec![lerp(OPERATING_DISTANCE, i), lerp(OPERATING_SPEED, j)])
        })
        .collect()
}

/// Operating samples strictly inside every adaptive level set, plus `x0`.
pub fn interior_samples(params: &AccParameters, n: usize) -> Vec<StateVector> {
    let mut out: Vec<StateVector> = operating_samples(n)
        .into_iter()
        .filter(|x| closed_form_adrcbf_terms(params, x).is_ok_and(|c| c.phi1 > 1e-3))
        .collect();
    out.push(params.x0.clone());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainChoice {
    /// Use `params.k`.
    #[default]
    Fixed,
    /// `k_i = η_i / (2𝒟)`.
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControllerMode,
    pub gains: GainChoice,
    /// Multiplies the chosen gains `k`.
    pub k_scale: f64,
    /// `η` for optimal gains; estimated over the operating region when absent.
    pub eta: Option<Vec<f64>>,
    /// `𝒟`; defaults to the nominal bound of the disturbance spec.
    pub disturbance_bound: Option<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControllerMode::Drcbf,
            gains: GainChoice::Fixed,
            k_scale: 1.0,
            eta: None,
            disturbance_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    pub horizon: f64,
    pub control_period: f64,
    pub substeps: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            horizon: 30.0,
            control_period: 1e-3,
            substeps: 1,
        }
    }
}

/// Complete, serializable description of one ACC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccScenario {
    #[serde(default)]
    pub params: AccParameters,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default = "zero_disturbance")]
    pub disturbance: SignalSpec,
    #[serde(default)]
    pub simulation: SimulationSettings,
}

fn zero_disturbance() -> SignalSpec {
    SignalSpec::zero(2)
}

/// Gains and bound after resolving the controller config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedGains {
    pub k: Vec<f64>,
    pub bound: f64,
    pub eta: Option<Vec<f64>>,
}

impl AccScenario {
    pub fn resolve_gains(&self) -> Result<ResolvedGains> {
        let p = &self.params;
        let bound = match self.controller.disturbance_bound {
            Some(b) if b.is_finite() && b >= 0.0 => b,
            Some(b) => {
                return Err(Error::InvalidParameter(format!(
                    "disturbance bound {b} must be nonnegative"
                )))
            }
            None => nominal_bound(&self.disturbance),
        };
        let scale = self.controller.k_scale;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "k_scale {scale} must be positive"
            )));
        }
        let (base, eta) = match self.controller.gains {
            GainChoice::Fixed => (p.k.clone(), None),
            GainChoice::Optimal => {
                let eta = match &self.controller.eta {
                    Some(eta) => eta.clone(),
                    None => {
                        estimate_optimal_gains(
                            &acc_system(p)?,
                            &acc_barrier(p),
                            bound,
                            &operating_samples(10),
                        )?
                        .0
                    }
                };
                (optimal_k(&eta, bound)?, Some(eta))
            }
        };
        Ok(ResolvedGains {
            k: base.iter().map(|k| k * scale).collect(),
            bound,
            eta,
        })
    }

    /// Parameters with `k` replaced by the resolved gains.
    pub fn effective_params(&self) -> Result<(AccParameters, ResolvedGains)> {
        let gains = self.resolve_gains()?;
        let mut p = self.params.clone();
        p.k = gains.k.clone();
        Ok((p, gains))
    }

    pub fn safety_filter(&self) -> Result<SafetyFilter> {
        let (p, gains) = self.effective_params()?;
        let system = acc_system(&p)?;
        let b = acc_barrier(&p);
        let coeffs = p.coefficients()?;
        let samples = operating_samples(10);
        Ok(match self.controller.mode {
            ControllerMode::Hocbf => {
                SafetyFilter::Hocbf(build_hocbf_chain(&system, &b, &coeffs, &samples)?)
            }
            ControllerMode::Drcbf => SafetyFilter::Drcbf(build_drcbf_chain(
                &system,
                &b,
                &coeffs,
                &gains.k,
                gains.bound,
                &samples,
            )?),
            ControllerMode::Adrcbf => SafetyFilter::Adrcbf(build_adrcbf_chain(
                &system,
                &b,
                &coeffs,
                &p.k,
                &p.r,
                Arc::new(ReciprocalEnergy),
                &interior_samples(&p, 10),
            )?),
        })
    }

    pub fn build(&self) -> Result<SimulationConfig> {
        let (p, gains) = self.effective_params()?;
        let controller = ControllerSpec {
            system: acc_system(&p)?,
            filter: self.safety_filter()?,
            clf: acc_clf(&p),
            cost: acc_cost(&p),
            control_period: self.simulation.control_period,
        };
        let parameters = serde_json::json!({
            "scenario": self,
            "resolved": gains,
        });
        Ok(SimulationConfig {
            controller,
            disturbance: self.disturbance.clone(),
            x0: p.x0.clone(),
            horizon: self.simulation.horizon,
            control_period: self.simulation.control_period,
            substeps: self.simulation.substeps,
            parameters,
        })
    }
}

fn sinusoid(amplitude: f64, w: f64, kind: WaveKind) -> SignalTerm {
    SignalTerm::Sinusoid {
        amplitude,
        angular_frequency: w,
        phase: 0.0,
        kind,
    }
}

fn uniform(low: f64, high: f64) -> SignalTerm {
    SignalTerm::UniformNoise {
        low,
        high,
        hold_interval: None,
    }
}

/// Disturbances of the three benchmark cases.
pub fn case_disturbance(case_id: u8) -> Result<SignalSpec> {
    use WaveKind::{Cos, Sin};
    let channels = match case_id {
        1 => vec![
            vec![uniform(-4.0, 4.0), sinusoid(1.0, 5.0, Sin)],
            vec![uniform(-4.0, 4.0), sinusoid(0.5, 10.0, Cos)],
        ],
        2 => vec![
            vec![sinusoid(2.0, 5.0, Sin), sinusoid(1.5, 10.0, Cos)],
            vec![sinusoid(1.0, 10.0, Sin), sinusoid(2.0, 6.0, Cos)],
        ],
        3 => vec![
            vec![uniform(-4.0, 4.0), sinusoid(5.0, 2.0, Sin)],
            vec![uniform(-5.0, 5.0), sinusoid(4.0, 2.0, Sin)],
        ],
        other => return Err(Error::InvalidParameter(format!("unknown case {other}"))),
    };
    Ok(SignalSpec {
        channels,
        seed: CASE_SEED,
    })
}

/// Controller variant of a case run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseVariant {
    pub mode: ControllerMode,
    /// Multiplier on `k` (on `k*` in case 3).
    pub k_multiplier: f64,
    /// `r_0 = r_1`; defaults to the parameter set.
    pub r: Option<f64>,
}

impl CaseVariant {
    pub fn new(mode: ControllerMode) -> Self {
        Self {
            mode,
            k_multiplier: 1.0,
            r: None,
        }
    }

    pub fn with_k_multiplier(mut self, k_multiplier: f64) -> Self {
        self.k_multiplier = k_multiplier;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }
}

/// Case 1 and 2 use the fixed gains `k = (0.1, 0.1)`; case 3 uses
/// `k* = η/(2𝒟)` with `η = (1, 1)` for both cascades.
pub fn case_scenario(case_id: u8, variant: CaseVariant) -> Result<AccScenario> {
    let disturbance = case_disturbance(case_id)?;
    let mut params = AccParameters::default();
    if let Some(r) = variant.r {
        params.r = vec![r, r];
    }
    let controller = ControllerConfig {
        mode: variant.mode,
        gains: if case_id == 3 {
            GainChoice::Optimal
        } else {
            GainChoice::Fixed
        },
        k_scale: variant.k_multiplier,
        eta: (case_id == 3).then(|| vec![1.0, 1.0]),
        disturbance_bound: None,
    };
    Ok(AccScenario {
        params,
        controller,
        disturbance,
        simulation: SimulationSettings::default(),
    })
}

pub fn case_config(case_id: u8, variant: CaseVariant) -> Result<SimulationConfig> {
    case_scenario(case_id, variant)?.build()
}
