//! LP-update (model predictive control) policy for average-reward restless
//! Markovian bandits, with the steady-state LP relaxation, baseline policies,
//! an N-arm simulator and the diagnostics used to analyse them.

pub mod analysis;
pub mod error;
pub mod instances;
pub mod lp;
pub mod model;
pub mod policies;
pub mod simulator;

pub use error::{Error, Result};
pub use lp::{
    lp_priority_index, solve_finite_horizon, solve_relaxation, FiniteHorizonSolver, HorizonPlan,
    LpSolution,
};
pub use model::{BudgetRule, ControlVector, OccupancyVector, RmabInstance, SystemState};
