//! Right-hand sides, time integration and energy diagnostics.

mod diagnostics;
mod energy;
mod integrator;
mod system;

pub use diagnostics::{balance_residual, balance_residual_upto, dissipation_time_bound, flux_budget_check};
pub use energy::{energy_report, energy_report_at, energy_report_classic, EnergyReport};
pub use integrator::{
    integrate, integrate_classic, integrate_system, AccumulatedWork, PositivityMode, SolverOptions, SolverStats,
    StepRecord, Trajectory,
};
pub use system::{CascadeSystem, Closure};

use crate::error::Result;
use crate::params::ModelParams;
use crate::state::{ClassicState, TreeState};

/// Time derivative of a tree state under Galerkin closure.
pub fn rhs_tree(state: &TreeState, params: &ModelParams) -> Result<Vec<f64>> {
    state.check_finite()?;
    let p = ModelParams {
        branching: state.shape().branching(),
        depth: state.shape().depth(),
        ..*params
    };
    let system = CascadeSystem::galerkin(p)?;
    let mut dx = vec![0.0; state.values().len()];
    system.rhs(0.0, state.values(), &mut dx);
    Ok(dx)
}

/// Time derivative of a classic state under Galerkin closure; `params.alpha` is β.
pub fn rhs_classic(state: &ClassicState, params: &ModelParams) -> Result<Vec<f64>> {
    state.check_finite()?;
    let p = ModelParams {
        branching: 1,
        depth: state.depth(),
        ..*params
    };
    let system = CascadeSystem::galerkin(p)?;
    let mut dy = vec![0.0; state.values().len()];
    system.rhs(0.0, state.values(), &mut dy);
    Ok(dy)
}
