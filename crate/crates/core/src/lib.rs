//! Disturbance-rejection control barrier functions and a CLF-CBF safety filter.
//!
//! Fields are smooth scalar functions evaluated through truncated Taylor jets,
//! so every Lie derivative a barrier cascade needs is exact. The cascades
//! ([`drcbf`], [`adrcbf`]) produce one affine constraint on the control, which
//! [`controller`] combines with a slacked tracking constraint in a small QP.

pub mod acc;
pub mod adrcbf;
pub mod constraint;
pub mod controller;
pub mod disturbance;
pub mod drcbf;
pub mod error;
pub mod field;
pub mod jet;
pub mod poles;
pub mod qp;
pub mod sim;

pub use adrcbf::*;
pub use constraint::*;
pub use controller::*;
pub use disturbance::*;
pub use drcbf::*;
pub use error::{Error, Result};
pub use field::*;
pub use jet::Jet;
pub use poles::*;
pub use qp::*;
pub use sim::*;
