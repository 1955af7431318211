use super::system::{CascadeSystem, Closure};
use crate::error::Result;
use crate::params::ModelParams;
use crate::state::{ClassicState, TreeState};
use crate::sum::pairwise_sum_by;

/// Energy bookkeeping of a single state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Energy of generation `n`, `E_n − E_{n−1}`.
    pub per_generation: Vec<f64>,
    /// `E_n = Σ_{|j|≤n} X_j²`.
    pub cumulative: Vec<f64>,
    pub total: f64,
    /// Flux out of the first `n + 1` generations, for `n < depth`.
    pub boundary_flux: Vec<f64>,
    /// Flux through the truncation boundary (zero for Galerkin closure).
    pub truncation_flux: f64,
    /// Instantaneous balance defect `dE/dt − 2f²X_0 + 2νΣ d_j X_j² + truncation_flux`.
    pub balance_residual: f64,
}

/// Energy report of `x` under `system` at time `t`.
pub fn energy_report_at(system: &CascadeSystem, t: f64, x: &[f64]) -> EnergyReport {
    let p = system.params();
    let depth = p.depth;
    let per_generation = system.generation_energies(x);
    let mut cumulative = Vec::with_capacity(per_generation.len());
    let mut acc = 0.0;
    for e in &per_generation {
        acc += e;
        cumulative.push(acc);
    }
    let mut rates = vec![0.0; system.rate_len()];
    system.work_rates(t, x, &mut rates);
    let fluxes = &rates[2 + depth..];
    let viscous: f64 = rates[1..2 + depth].iter().sum();

    let mut dx = vec![0.0; x.len()];
    system.rhs(t, x, &mut dx);
    let de = 2.0 * pairwise_sum_by(0..x.len(), &|i| x[i] * dx[i]);
    let truncation_flux = fluxes[depth];
    let balance_residual = de - 2.0 * p.f * p.f * rates[0] + 2.0 * p.nu * viscous + truncation_flux;

    EnergyReport {
        total: acc,
        per_generation,
        cumulative,
        boundary_flux: fluxes[..depth].to_vec(),
        truncation_flux,
        balance_residual,
    }
}

/// Energy report of a tree state under Galerkin closure.
pub fn energy_report(state: &TreeState, params: &ModelParams) -> Result<EnergyReport> {
    state.check_finite()?;
    let system = CascadeSystem::new(params.with_depth(state.shape().depth()), Closure::Galerkin)?;
    Ok(energy_report_at(&system, 0.0, state.values()))
}

/// Energy report of a classic state under Galerkin closure.
pub fn energy_report_classic(state: &ClassicState, params: &ModelParams) -> Result<EnergyReport> {
    let p = ModelParams {
        branching: 1,
        depth: state.depth(),
        ..*params
    };
    let system = CascadeSystem::new(p, Closure::Galerkin)?;
    Ok(energy_report_at(&system, 0.0, state.values()))
}
