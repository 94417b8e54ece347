//! Incentive design for epidemic mitigation: a population of agents choosing
//! among transmission-reducing strategies is steered, through a dynamic
//! payoff mechanism, to the least-transmission mix affordable under a budget.
//!
//! The crate covers the model ([`model`]), the design of the target and
//! reward ([`design`]), revision protocols ([`protocol`]), the closed-loop
//! simulation ([`dynamics`]) and Lyapunov-based bounds ([`lyapunov`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod dynamics;
pub mod error;
pub mod lyapunov;
pub mod model;
pub mod ode;
pub mod protocol;

pub use design::{DesignParams, DesignTarget, EpidemicGame};
pub use dynamics::{integrate, MechanismConfig, RunOptions, Trajectory};
pub use error::{Error, ErrorClass, Result};
pub use model::{EpidemicParams, PopulationState, StrategyProfile, SystemState};
pub use protocol::{Protocol, Smith};
