//! Decay exponent of the per-node RMS amplitude across generations.

use dyadic_core::TreeState;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error("degenerate fit window [{lo}, {hi}]: {reason}")]
    DegenerateWindow { lo: usize, hi: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFit {
    /// `−slope` of `log2 rms_n` against `n`.
    pub eta: f64,
    /// RMS of the least-squares residuals in `log2` units.
    pub residual: f64,
    pub window: (usize, usize),
    /// Per-node RMS of every generation.
    pub rms: Vec<f64>,
}

/// RMS per node from generation energies `Σ_{|j|=n} X_j²`.
pub fn rms_from_energies(energies: &[f64], branching: usize) -> Vec<f64> {
    let mut count = 1.0;
    energies
        .iter()
        .map(|&e| {
            let r = (e / count).sqrt();
            count *= branching as f64;
            r
        })
        .collect()
}

pub fn fit_rms(rms: Vec<f64>, window: (usize, usize)) -> Result<SpectrumFit, SpectrumError> {
    let (lo, hi) = window;
    let degenerate = |reason: String| SpectrumError::DegenerateWindow { lo, hi, reason };
    if lo >= hi {
        return Err(degenerate("needs at least two generations".into()));
    }
    if hi >= rms.len() {
        return Err(degenerate(format!("only {} generations available", rms.len())));
    }
    if let Some(n) = (lo..=hi).find(|&n| !(rms[n] > 0.0 && rms[n].is_finite())) {
        return Err(degenerate(format!("RMS at generation {n} is {}", rms[n])));
    }
    let pts: Vec<(f64, f64)> = (lo..=hi).map(|n| (n as f64, rms[n].log2())).collect();
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let ss: f64 = pts.iter().map(|p| (p.1 - ybar - slope * (p.0 - xbar)).powi(2)).sum();
    Ok(SpectrumFit {
        eta: -slope,
        residual: (ss / m).sqrt(),
        window,
        rms,
    })
}

pub fn fit_spectrum(state: &TreeState, window: (usize, usize)) -> Result<SpectrumFit, SpectrumError> {
    let shape = state.shape();
    let rms = (0..=shape.depth())
        .map(|g| {
            let v = state.generation(g);
            (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
        })
        .collect();
    fit_rms(rms, window)
}

pub fn fit_energies(energies: &[f64], branching: usize, window: (usize, usize)) -> Result<SpectrumFit, SpectrumError> {
    fit_rms(rms_from_energies(energies, branching), window)
}
