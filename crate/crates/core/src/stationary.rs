//! Stationary solutions.
//!
//! Inviscid profiles are explicit. Viscous classic profiles use the rescaled
//! variables `Z_n = ν^{-1} 2^{β(n+2)/3} Y_n`, which satisfy
//!
//! ```text
//! Z_{n+1} = Z_{n-1}² / Z_n − 2^{μn},   Z_{-1} = g = ν^{-1} 2^{β/3} f,   μ = γ − 2β/3,
//! ```
//!
//! and `Z_0` is found by nested-interval shooting. Tree profiles are lifts of
//! classic ones.

use crate::error::{Error, Result};
use crate::lift::{lift_generations, LiftSpec};
use crate::params::{alpha_tilde as alpha_tilde_of, pow2};
use crate::shooting::{bisect_anchor, dd_log2, dd_pow2, dd_valid, resolved_until, to_f64, BisectOptions, Dd, Direction, Recurrence};
use crate::state::{ClassicState, TreeState};
use crate::tree::TreeShape;

/// Extra indices beyond `n_max` used to classify shots.
const EXTRA_HORIZON: usize = 200;

/// `log2` of the relative size below which `Z_{n+1} / 2^{μn}` is dropped in the tail.
const TAIL_LOG2_TOL: f64 = -113.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    InviscidExplicit,
    ViscousRegular,
    ViscousAnomalous,
    /// `μ < 0` below the forcing threshold; the anomaly statement does not cover it.
    ViscousSmallForcingRegular,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::InviscidExplicit => "InviscidExplicit",
            Regime::ViscousRegular => "ViscousRegular",
            Regime::ViscousAnomalous => "ViscousAnomalous",
            Regime::ViscousSmallForcingRegular => "ViscousSmallForcingRegular",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeClassification {
    pub regime: Regime,
    pub mu: f64,
    /// `1/(1 − 2^μ)` when `μ < 0`.
    pub threshold: Option<f64>,
    pub certificate: &'static str,
}

/// `μ = γ − 2β/3`.
pub fn mu(beta: f64, gamma: f64) -> f64 {
    gamma - 2.0 * beta / 3.0
}

/// `g = ν^{-1} 2^{β/3} f`.
pub fn rescaled_forcing(f: f64, nu: f64, beta: f64) -> f64 {
    f / nu * pow2(beta / 3.0)
}

pub fn classify_regime(beta: f64, gamma: f64, g: f64) -> RegimeClassification {
    let mu = mu(beta, gamma);
    // Decide the sign on 3γ − 2β so the inclusive boundary is exact.
    if 3.0 * gamma - 2.0 * beta >= 0.0 {
        return RegimeClassification {
            regime: Regime::ViscousRegular,
            mu,
            threshold: None,
            certificate: "Z_n < Z_{n-1}^2 eventually, doubly exponential decay",
        };
    }
    let threshold = 1.0 / (1.0 - pow2(mu));
    if g > threshold {
        RegimeClassification {
            regime: Regime::ViscousAnomalous,
            mu,
            threshold: Some(threshold),
            certificate: "g > 1/(1 - 2^mu): Z_n decreases to a positive limit, border flux stays positive",
        }
    } else {
        RegimeClassification {
            regime: Regime::ViscousSmallForcingRegular,
            mu,
            threshold: Some(threshold),
            certificate: "mu < 0 below the forcing threshold: inconclusive",
        }
    }
}

/// Limit of the border flux `k_{n+1} Y_n² Y_{n+1}` when `Z_n → z`: `2^{-4β/3} ν³ z³`.
pub fn asymptotic_flux(z: f64, beta: f64, nu: f64) -> f64 {
    pow2(-4.0 * beta / 3.0) * nu.powi(3) * z.powi(3)
}

/// `Y_n = f 2^{-β(n+1)/3}` for `n = 0..=n_max`. Zero forcing gives the zero state.
pub fn inviscid_classic_profile(f: f64, beta: f64, n_max: usize) -> Result<ClassicState> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::DomainError(format!("forcing must be non-negative, got {f}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::DomainError(format!("beta must be positive, got {beta}")));
    }
    ClassicState::new((0..=n_max).map(|n| f * pow2(-beta * (n + 1) as f64 / 3.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InviscidTreeProfile {
    pub state: TreeState,
    /// Ratio of consecutive generation energies, `2^{2(α̃−α)/3}`.
    pub energy_ratio: f64,
    /// `α > α̃`; otherwise the infinite profile has infinite energy.
    pub square_summable: bool,
}

/// `X_j = f 2^{-(|j|+1)(2α̃+α)/3}` on the tree with `N = 2^{2α̃}`.
pub fn inviscid_tree_profile(f: f64, alpha: f64, alpha_tilde: f64, depth: usize) -> Result<InviscidTreeProfile> {
    if !(f >= 0.0 && f.is_finite()) {
        return Err(Error::DomainError(format!("forcing must be non-negative, got {f}")));
    }
    let branching = branching_of(alpha_tilde)?;
    let shape = TreeShape::new(branching, depth)?;
    let e = (2.0 * alpha_tilde + alpha) / 3.0;
    let per_gen: Vec<f64> = (0..=depth).map(|g| f * pow2(-((g + 1) as f64) * e)).collect();
    Ok(InviscidTreeProfile {
        state: TreeState::from_generations(shape, &per_gen)?,
        energy_ratio: pow2(2.0 * (alpha_tilde - alpha) / 3.0),
        square_summable: alpha > alpha_tilde,
    })
}

pub(crate) fn branching_of(alpha_tilde: f64) -> Result<usize> {
    let n = pow2(2.0 * alpha_tilde);
    let r = n.round();
    if !(alpha_tilde >= 0.0) || (n - r).abs() > 1e-9 * r || r > (1u64 << 40) as f64 {
        return Err(Error::DomainError(format!(
            "2^(2 alpha_tilde) = {n} is not an integer branching factor"
        )));
    }
    Ok(r as usize)
}

/// Plain double-precision iteration of the Z recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSequence {
    /// `values[i] = Z_{i-1}`, starting from `Z_{-1} = g`, `Z_0 = a`.
    pub values: Vec<f64>,
    /// First index `n` with `Z_n ≤ 0` (its value is the last entry).
    pub failure_index: Option<usize>,
}

pub fn z_step_sequence(g: f64, a: f64, mu: f64, n_max: usize) -> ZSequence {
    let mut values = vec![g, a];
    for n in 0..n_max {
        let prev = values[n];
        let cur = values[n + 1];
        let next = prev * prev / cur - pow2(mu * n as f64);
        values.push(next);
        if !(next > 0.0) {
            return ZSequence {
                values,
                failure_index: Some(n + 1),
            };
        }
    }
    ZSequence {
        values,
        failure_index: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryOptions {
    pub n_max: usize,
    /// Required relative width of the final `Z_0` bracket.
    pub bisection_tol: f64,
    pub max_iterations: usize,
    /// Starting point of the geometric bracket search (defaults to `g`).
    pub initial_guess: Option<f64>,
    /// Explicit starting bracket for `Z_0`; must classify as (too small, too large).
    pub initial_bracket: Option<(f64, f64)>,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            n_max: 60,
            bisection_tol: 1e-12,
            max_iterations: 500,
            initial_guess: None,
            initial_bracket: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile {
    pub f: f64,
    pub nu: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Rescaled forcing; infinite for the inviscid profile.
    pub g: f64,
    pub mu: f64,
    /// `z[i] = Z_{i-1}` for `i = 0..=n_max+1`. May underflow to zero in doubly
    /// exponential tails; `log2_z` stays finite. NaN for inviscid profiles.
    pub z: Vec<f64>,
    pub log2_z: Vec<f64>,
    /// `Y_0..=Y_{n_max}`.
    pub y: Vec<f64>,
    pub regime: Regime,
    pub threshold: Option<f64>,
    pub certificate: &'static str,
    /// Extrapolated `lim Z_n` for the anomalous regime.
    pub z_limit: Option<f64>,
    /// Last computed `Z_n` (plain fallback for the limit).
    pub z_last: f64,
    /// Final bisection interval for `Z_0`.
    pub bracket: (f64, f64),
    /// Indices where the shooting was (re)started.
    pub anchors: Vec<usize>,
    /// First index computed by the asymptotic tail formula, if any.
    pub tail_start: Option<usize>,
}

impl StationaryProfile {
    pub fn n_max(&self) -> usize {
        self.y.len() - 1
    }

    /// `Z_n` for `n ≥ -1`.
    pub fn z_at(&self, n: i64) -> f64 {
        self.z[(n + 1) as usize]
    }

    pub fn log2_z_at(&self, n: i64) -> f64 {
        self.log2_z[(n + 1) as usize]
    }

    pub fn z0(&self) -> f64 {
        self.z_at(0)
    }

    pub fn classic_state(&self) -> Result<ClassicState> {
        ClassicState::new(self.y.clone())
    }

    /// Border flux `k_{n+1} Y_n² Y_{n+1}` for `n < n_max`.
    pub fn border_flux(&self, n: usize) -> f64 {
        if self.regime == Regime::InviscidExplicit {
            let k = pow2(self.beta * (n + 1) as f64);
            return k * self.y[n] * self.y[n] * self.y[n + 1];
        }
        let l = 2.0 * self.log2_z_at(n as i64) + self.log2_z_at(n as i64 + 1) - 4.0 * self.beta / 3.0;
        self.nu.powi(3) * l.exp2()
    }
}

/// Inviscid classic profile packaged as a [`StationaryProfile`].
pub fn inviscid_stationary_profile(f: f64, beta: f64, gamma: f64, n_max: usize) -> Result<StationaryProfile> {
    let y = inviscid_classic_profile(f, beta, n_max)?.into_values();
    Ok(StationaryProfile {
        f,
        nu: 0.0,
        beta,
        gamma,
        g: f64::INFINITY,
        mu: mu(beta, gamma),
        z: vec![f64::NAN; n_max + 2],
        log2_z: vec![f64::NAN; n_max + 2],
        z_last: f64::NAN,
        y,
        regime: Regime::InviscidExplicit,
        threshold: None,
        certificate: "explicit formula Y_n = f 2^{-beta(n+1)/3}",
        z_limit: None,
        bracket: (f64::NAN, f64::NAN),
        anchors: Vec::new(),
        tail_start: None,
    })
}

struct ZRecurrence {
    s: Vec<Dd>,
}

impl Recurrence for ZRecurrence {
    fn step(&self, n: usize, prev: Dd, cur: Dd) -> Dd {
        prev * prev / cur - self.s[n]
    }

    fn departure(&self, m: usize, _cur: Dd, next: Dd) -> Option<(usize, Direction)> {
        if !dd_valid(next) {
            // Blow-up follows a value that collapsed to zero one step earlier.
            return Some((m - 1, Direction::Down));
        }
        if next <= 0.0 {
            return Some((m, Direction::Down));
        }
        None
    }
}

pub fn solve_viscous_stationary(
    f: f64,
    nu: f64,
    beta: f64,
    gamma: f64,
    n_max: usize,
    bisection_tol: f64,
) -> Result<StationaryProfile> {
    let opts = StationaryOptions {
        n_max,
        bisection_tol,
        ..StationaryOptions::default()
    };
    solve_viscous_stationary_with(f, nu, beta, gamma, &opts)
}

pub fn solve_viscous_stationary_with(
    f: f64,
    nu: f64,
    beta: f64,
    gamma: f64,
    opts: &StationaryOptions,
) -> Result<StationaryProfile> {
    for (name, v) in [("f", f), ("nu", nu), ("beta", beta), ("gamma", gamma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::DomainError(format!("{name} must be positive, got {v}")));
        }
    }
    if !(opts.bisection_tol > 0.0) {
        return Err(Error::DomainError("bisection_tol must be positive".into()));
    }
    let n_max = opts.n_max;
    let mu_v = mu(beta, gamma);
    let horizon = n_max + EXTRA_HORIZON;
    let rec = ZRecurrence {
        s: (0..=n_max + horizon + 2).map(|n| dd_pow2(mu_v, n)).collect(),
    };
    let g_dd = Dd::from(f) / nu * dd_pow2(beta / 3.0, 1);
    let g = to_f64(g_dd);
    let class = classify_regime(beta, gamma, g);

    // values[i] = Z_{i-1}
    let mut values: Vec<Dd> = vec![g_dd];
    let mut logs: Vec<f64> = vec![dd_log2(g_dd)];
    let mut anchors = Vec::new();
    let mut tail_start = None;
    let mut bracket = (f64::NAN, f64::NAN);
    let mut k = 0usize;
    let mut guess = Dd::from(opts.initial_guess.unwrap_or(g));
    while k <= n_max {
        if k >= 1 && tail_applies(&logs, k, mu_v) {
            tail_start = Some(k);
            extend_tail(&mut logs, k, n_max, mu_v);
            break;
        }
        let prev = values[k];
        let explicit = if k == 0 {
            opts.initial_bracket.map(|(a, b)| (Dd::from(a), Dd::from(b)))
        } else {
            None
        };
        let bopts = BisectOptions {
            horizon: k + horizon,
            max_iterations: opts.max_iterations,
            tol: if k == 0 { opts.bisection_tol } else { f64::INFINITY },
        };
        let sol = bisect_anchor(&rec, k, prev, guess, explicit, bopts)?;
        if k == 0 {
            bracket = (to_f64(sol.lo), to_f64(sol.hi));
            let width = (bracket.1 - bracket.0) / to_f64(sol.mid.values[0]);
            if width > opts.bisection_tol {
                return Err(Error::NoConvergence {
                    iterations: sol.iterations,
                    width,
                });
            }
        }
        anchors.push(k);
        let r = resolved_until(k, &sol).min(n_max);
        for i in k..=r {
            let v = sol.mid.values[i - k];
            values.push(v);
            logs.push(dd_log2(v));
        }
        if r >= n_max {
            break;
        }
        let next = r + 1;
        guess = match sol.mid.values.get(next - k) {
            Some(&v) if dd_valid(v) && v > 0.0 => v,
            _ => {
                let p = values[next];
                p * p / rec.s[next] * 0.5
            }
        };
        k = next;
    }
    debug_assert_eq!(logs.len(), n_max + 2);

    let z: Vec<f64> = (0..logs.len())
        .map(|i| if i < values.len() { to_f64(values[i]) } else { logs[i].exp2() })
        .collect();
    let log_nu = nu.log2();
    let y: Vec<f64> = (0..=n_max)
        .map(|n| {
            if n + 1 < values.len() {
                nu * to_f64(values[n + 1] * dd_pow2(-beta / 3.0, n + 2))
            } else {
                (log_nu - beta * (n + 2) as f64 / 3.0 + logs[n + 1]).exp2()
            }
        })
        .collect();
    let z_last = z[n_max + 1];
    let z_limit = match class.regime {
        Regime::ViscousAnomalous => Some(aitken_limit(&values).unwrap_or(z_last)),
        _ => None,
    };
    Ok(StationaryProfile {
        f,
        nu,
        beta,
        gamma,
        g,
        mu: mu_v,
        z,
        log2_z: logs,
        y,
        regime: class.regime,
        threshold: class.threshold,
        certificate: class.certificate,
        z_limit,
        z_last,
        bracket,
        anchors,
        tail_start,
    })
}

/// Whether `Z_{m+1} ≪ 2^{μm}` holds from index `k` on, judged from the
/// leading-order estimate `Z_m ≈ Z_{m-1}² / 2^{μm}`.
fn tail_applies(logs: &[f64], k: usize, mu_v: f64) -> bool {
    let lk = 2.0 * logs[k] - mu_v * k as f64;
    let lk1 = 2.0 * lk - mu_v * (k + 1) as f64;
    let lk2 = 2.0 * lk1 - mu_v * (k + 2) as f64;
    (lk1 - mu_v * k as f64) < TAIL_LOG2_TOL && (lk2 - mu_v * (k + 1) as f64) < TAIL_LOG2_TOL
}

/// `log2 Z_m = 2 log2 Z_{m-1} − μm − log2(1 + Z_{m+1}/2^{μm})` for `m = k..=n_max`.
fn extend_tail(logs: &mut Vec<f64>, k: usize, n_max: usize, mu_v: f64) {
    for m in k..=n_max {
        let lead = 2.0 * logs[m] - mu_v * m as f64;
        let next = 2.0 * lead - mu_v * (m + 1) as f64;
        let corr = (next - mu_v * m as f64).exp2().ln_1p() * std::f64::consts::LOG2_E;
        logs.push(lead - corr);
    }
}

/// Aitken extrapolation at the deepest index whose second difference is still
/// resolved in double-double.
fn aitken_limit(values: &[Dd]) -> Option<f64> {
    let n = values.len();
    for i in (2..n).rev() {
        let (a, b, c) = (values[i - 2], values[i - 1], values[i]);
        let d1 = c - b;
        let d2 = c - b * 2.0 + a;
        if to_f64(d2.abs()) > 1e-24 * to_f64(c.abs()) {
            return Some(to_f64(c - d1 * d1 / d2));
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeStationaryProfile {
    pub state: TreeState,
    /// Classic profile that was lifted, with forcing `2^{α̃} f`.
    pub classic: StationaryProfile,
    pub regime: Regime,
}

/// Stationary tree profile: explicit for `ν = 0`, otherwise the lift of the
/// classic solution with `β = α − α̃` and forcing `2^{α̃} f`.
pub fn stationary_tree_profile(
    f: f64,
    nu: f64,
    alpha: f64,
    gamma: f64,
    branching: usize,
    depth: usize,
    opts: &StationaryOptions,
) -> Result<TreeStationaryProfile> {
    let at = alpha_tilde_of(branching);
    if !(alpha > at) {
        return Err(Error::DomainError(format!("need alpha > alpha_tilde = {at}, got {alpha}")));
    }
    if !(f > 0.0) {
        return Err(Error::DomainError(format!("forcing must be positive, got {f}")));
    }
    let spec = LiftSpec::new(branching, alpha - at)?;
    let fc = spec.classic_forcing(f);
    let n_max = opts.n_max.max(depth);
    if nu == 0.0 {
        let classic = inviscid_stationary_profile(fc, spec.beta, gamma, n_max)?;
        let state = inviscid_tree_profile(f, alpha, at, depth)?.state;
        return Ok(TreeStationaryProfile {
            state,
            classic,
            regime: Regime::InviscidExplicit,
        });
    }
    let o = StationaryOptions {
        n_max,
        ..opts.clone()
    };
    let classic = solve_viscous_stationary_with(fc, nu, spec.beta, gamma, &o)?;
    let per_gen = lift_generations(&classic.y, &spec, depth)?;
    let state = TreeState::from_generations(TreeShape::new(branching, depth)?, &per_gen)?;
    Ok(TreeStationaryProfile {
        state,
        regime: classic.regime,
        classic,
    })
}
