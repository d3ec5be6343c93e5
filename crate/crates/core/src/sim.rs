//! Fixed-step closed-loop simulation with zero-order-hold control.

use serde::{Deserialize, Serialize};

use crate::controller::{control_step, ControllerSpec};
use crate::disturbance::{realize_with_hold, SignalRealization, SignalSpec};
use crate::error::{Error, Result};
use crate::field::{ControlAffineSystem, StateVector};
use crate::qp::QpStatus;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub controller: ControllerSpec,
    pub disturbance: SignalSpec,
    pub x0: StateVector,
    pub horizon: f64,
    pub control_period: f64,
    pub substeps: usize,
    /// Free-form run description copied into the log.
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub slack: f64,
    pub d: Vec<f64>,
    pub phi: Vec<f64>,
    pub cbf_residual: Option<f64>,
    pub clf_residual: f64,
    pub qp_status: QpStatus,
    pub guard_event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { step: usize, t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: Option<String>,
    pub seed: u64,
    pub horizon: f64,
    pub control_period: f64,
    pub substeps: usize,
    pub integrator: String,
    pub noise_hold_interval: f64,
    pub guard_events: usize,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub records: Vec<StepRecord>,
    /// State after the last completed step.
    pub final_state: Vec<f64>,
    pub metadata: RunMetadata,
    pub status: RunStatus,
}

impl TrajectoryLog {
    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Smallest level value over all steps and levels.
    pub fn min_phi(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.phi.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn guard_events(&self) -> usize {
        self.records.iter().filter(|r| r.guard_event).count()
    }
}

/// One classical RK4 step of `ẋ = f + g u + h d` with `u`, `d` frozen.
pub fn integrate_step(
    system: &ControlAffineSystem,
    x: &[f64],
    u: &[f64],
    d: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step must be positive, got {h}"
        )));
    }
    let axpy =
        |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = system.rhs(x, u, d)?;
    let k2 = system.rhs(&axpy(0.5 * h, &k1), u, d)?;
    let k3 = system.rhs(&axpy(0.5 * h, &k2), u, d)?;
    let k4 = system.rhs(&axpy(h, &k3), u, d)?;
    let next: Vec<f64> = (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("integrated state"));
    }
    Ok(next)
}

pub fn steps_for(horizon: f64, control_period: f64) -> usize {
    (horizon / control_period).round() as usize
}

/// Runs the closed loop for `horizon` seconds.
///
/// Faults during stepping do not produce an error; the partial log comes
/// back with a failed status instead.
pub fn run_simulation(config: &SimulationConfig) -> Result<TrajectoryLog> {
    let h = config.control_period;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "control period {h} must be positive"
        )));
    }
    if !(config.horizon.is_finite() && config.horizon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "horizon {} must be positive",
            config.horizon
        )));
    }
    if config.substeps == 0 {
        return Err(Error::InvalidParameter(
            "substeps must be at least 1".into(),
        ));
    }
    let system = &config.controller.system;
    if config.x0.len() != system.n() {
        return Err(Error::DimensionMismatch {
            operand: "x0",
            expected: system.n(),
            found: config.x0.len(),
        });
    }
    if config.disturbance.channels.len() != system.q() {
        return Err(Error::DimensionMismatch {
            operand: "disturbance channels",
            expected: system.q(),
            found: config.disturbance.channels.len(),
        });
    }
    if !config.controller.filter.contains(&config.x0)? {
        return Err(Error::InitialStateRejected(format!(
            "x0 = {:?} is outside the barrier set (levels {:?})",
            config.x0,
            config.controller.filter.levels(&config.x0)?
        )));
    }
    let realization: SignalRealization = realize_with_hold(&config.disturbance, config.horizon, h)?;

    let n_steps = steps_for(config.horizon, h);
    let sub_h = h / config.substeps as f64;
    let mut records = Vec::with_capacity(n_steps);
    let mut x = config.x0.clone();
    let mut status = RunStatus::Completed;

    for step in 0..n_steps {
        let t = step as f64 * h;
        let outcome = (|| -> Result<(StepRecord, Vec<f64>)> {
            let d = realization.evaluate(t)?;
            let out = control_step(&config.controller, &x, t)?;
            let record = StepRecord {
                t,
                x: x.clone(),
                u: out.u.clone(),
                slack: out.slack,
                d: d.clone(),
                phi: out.audit.phi,
                cbf_residual: out.audit.cbf_residual,
                clf_residual: out.audit.clf_residual,
                qp_status: out.status,
                guard_event: out.audit.guard_event,
            };
            if out.status == QpStatus::Infeasible {
                return Err(Error::IntegrationFault {
                    step,
                    t,
                    reason: "QP infeasible".into(),
                });
            }
            let mut next = x.clone();
            for _ in 0..config.substeps {
                next = integrate_step(system, &next, &out.u, &d, sub_h).map_err(|e| {
                    Error::IntegrationFault {
                        step,
                        t,
                        reason: e.to_string(),
                    }
                })?;
            }
            Ok((record, next))
        })();
        match outcome {
            Ok((record, next)) => {
                records.push(record);
                x = next;
            }
            Err(e) => {
                status = RunStatus::Failed {
                    step,
                    t,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }

    let guard_events = records.iter().filter(|r| r.guard_event).count();
    Ok(TrajectoryLog {
        records,
        final_state: x,
        metadata: RunMetadata {
            mode: config.controller.filter.mode().map(|m| m.to_string()),
            seed: config.disturbance.seed,
            horizon: config.horizon,
            control_period: h,
            substeps: config.substeps,
            integrator: "rk4".into(),
            noise_hold_interval: h,
            guard_events,
            parameters: config.parameters.clone(),
        },
        status,
    })
}
