//! Shared fixtures for the control benchmarks.

use drcbf_core::acc::{case_config, CaseVariant};
use drcbf_core::{ControllerMode, QpProblem, SimulationConfig};

/// Representative mid-transient ACC state.
pub const STATE: [f64; 2] = [60.0, 22.0];

pub const MODES: [ControllerMode; 3] = [
    ControllerMode::Hocbf,
    ControllerMode::Drcbf,
    ControllerMode::Adrcbf,
];

pub fn case1(mode: ControllerMode) -> SimulationConfig {
    case_config(1, CaseVariant::new(mode)).expect("case 1 builds")
}

/// Same config with a shorter horizon, for whole-run timing.
pub fn case1_short(mode: ControllerMode, horizon: f64) -> SimulationConfig {
    let mut c = case1(mode);
    c.horizon = horizon;
    c
}

/// The CLF-CBF QP shape over `(u, δ)` with both rows active at the optimum.
pub fn two_row_qp() -> QpProblem {
    QpProblem::new(
        vec![vec![2.0, 0.0], vec![0.0, 4.0]],
        vec![-3.0, 0.0],
        vec![vec![1.0, -1.0], vec![-0.5, 0.0]],
        vec![-1.0, -2.0],
    )
    .expect("well-formed")
}
