use super::integrator::Trajectory;
use crate::error::{Error, Result};

fn output_index(traj: &Trajectory, t: f64) -> Result<usize> {
    let start = traj.times[0];
    let end = *traj.times.last().unwrap_or(&start);
    traj.index_of(t).ok_or(Error::RangeError {
        s: t,
        t,
        start,
        end,
    })
}

/// Energy balance defect between output times `s < t`:
/// `E(t) − E(s) − 2f²∫X_0 + 2ν Σ_j d_j ∫X_j²`.
///
/// Zero up to integration error for Galerkin-truncated runs; equal to minus the
/// flux through the truncation boundary for self-similar tail closure.
pub fn balance_residual(traj: &Trajectory, s: f64, t: f64) -> Result<f64> {
    balance_residual_upto(traj, s, t, traj.depth())
}

/// Balance defect of `E_m` (generations `0..=m`). For `m` below the depth this
/// equals minus the accumulated flux out of generation `m`.
pub fn balance_residual_upto(traj: &Trajectory, s: f64, t: f64, m: usize) -> Result<f64> {
    let start = traj.times[0];
    let end = *traj.times.last().unwrap_or(&start);
    if !(s < t) || m > traj.depth() {
        return Err(Error::RangeError { s, t, start, end });
    }
    let is = output_index(traj, s)?;
    let it = output_index(traj, t)?;
    let p = &traj.params;
    let (ws, wt) = (&traj.work[is], &traj.work[it]);
    let de = traj.cumulative_energy(it, m) - traj.cumulative_energy(is, m);
    let input = 2.0 * p.f * p.f * (wt.input - ws.input);
    let viscous: f64 = (0..=m).map(|g| wt.viscous[g] - ws.viscous[g]).sum();
    Ok(de - input + 2.0 * p.nu * viscous)
}

/// Accumulated flux out of generations `0..=n` over the whole run, paired with `E_n(0)`.
///
/// For unforced positive solutions the first never exceeds the second. `n = -1`
/// is the trivial case `(0, 0)`.
pub fn flux_budget_check(traj: &Trajectory, n: i64) -> Result<(f64, f64)> {
    if traj.params.f != 0.0 {
        return Err(Error::ForcedRun { f: traj.params.f });
    }
    if n < 0 {
        return Ok((0.0, 0.0));
    }
    let n = n as usize;
    if n > traj.depth() {
        return Err(Error::DomainError(format!(
            "generation {n} beyond depth {}",
            traj.depth()
        )));
    }
    let last = traj.work.len() - 1;
    let flux = traj.work[last].flux[n] - traj.work[0].flux[n];
    Ok((flux, traj.cumulative_energy(0, n)))
}

/// Time after which every positive unforced solution with `E(0) ≤ eta` has `E ≤ epsilon`:
/// `2√2 η^{3/2} ε^{-2} (1 − q)^{-3}` with `q = 2^{-(α−α̃)/3}`.
pub fn dissipation_time_bound(epsilon: f64, eta: f64, alpha: f64, alpha_tilde: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(eta > 0.0) {
        return Err(Error::DomainError("epsilon and eta must be positive".into()));
    }
    if !(alpha > alpha_tilde) {
        return Err(Error::DomainError(format!(
            "need alpha > alpha_tilde, got {alpha} <= {alpha_tilde}"
        )));
    }
    let q = (-(alpha - alpha_tilde) / 3.0).exp2();
    Ok(2.0 * std::f64::consts::SQRT_2 * eta.powf(1.5) / (epsilon * epsilon * (1.0 - q).powi(3)))
}
