//! Dormand–Prince 5(4) with FSAL, max-norm error control and positivity control.
//!
//! Work integrals (forcing input, viscous dissipation and boundary fluxes) are
//! advanced with the same stages as the state.

use rayon::prelude::*;

use super::system::{CascadeSystem, Closure};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::state::{ClassicState, TreeState};
use crate::sum::fill_by;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];

/// Fifth-order weights (the last row of `A`; the seventh stage has weight zero).
const B: [f64; 6] = A[6];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const PAR_MIN: usize = 1 << 15;
/// Weight of the previous error in the step-size controller.
const PI_BETA: f64 = 0.04;

/// How negative components produced by a trial step are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositivityMode {
    /// Reject the step and retry with half the step size. Negatives within the
    /// local error tolerance are set to zero instead.
    #[default]
    RejectAndHalve,
    /// Accept the step and set negative components to zero.
    ClampToZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// First trial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
    pub positivity: PositivityMode,
    /// Consecutive rejections tolerated before giving up.
    pub max_rejections: usize,
    pub max_steps: usize,
    /// Spacing of output times; only the end points are recorded when `None`.
    pub output_interval: Option<f64>,
    /// Keep full state snapshots at output times.
    pub record_states: bool,
    /// Keep `(t, E, min X)` for every accepted step.
    pub record_steps: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_step: f64::INFINITY,
            initial_step: None,
            positivity: PositivityMode::RejectAndHalve,
            max_rejections: 60,
            max_steps: 50_000_000,
            output_interval: None,
            record_states: true,
            record_steps: true,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return bad("rel_tol", "must be positive");
        }
        if !(self.abs_tol > 0.0 && self.abs_tol.is_finite()) {
            return bad("abs_tol", "must be positive");
        }
        if !(self.max_step > 0.0) {
            return bad("max_step", "must be positive");
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad("initial_step", "must be positive");
            }
        }
        if let Some(dt) = self.output_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("output_interval", "must be positive");
            }
        }
        Ok(())
    }
}

/// Time integrals of the work rates, accumulated from the start of the run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccumulatedWork {
    /// `∫ X_0 du`.
    pub input: f64,
    /// `∫ Σ_{|j|=g} d_j X_j² du` per generation.
    pub viscous: Vec<f64>,
    /// `∫ 2 Σ_{|k|=g+1} c_k X_{parent(k)}² X_k du` per generation; the last entry is
    /// the flux through the truncation boundary.
    pub flux: Vec<f64>,
}

impl AccumulatedWork {
    fn from_raw(q: &[f64], depth: usize) -> Self {
        Self {
            input: q[0],
            viscous: q[1..2 + depth].to_vec(),
            flux: q[2 + depth..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub total_energy: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub positivity_rejections: usize,
    /// Steps whose round-off negatives were set to zero in reject mode.
    pub projected_steps: usize,
    pub clamped_steps: usize,
    /// Most negative value removed by clamping.
    pub max_clamped: f64,
    pub rhs_evaluations: usize,
}

/// Output of [`integrate_system`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub times: Vec<f64>,
    /// Snapshots at `times` (empty unless `record_states`).
    pub states: Vec<Vec<f64>>,
    /// Per-generation energies at `times`.
    pub energies: Vec<Vec<f64>>,
    /// Work integrals at `times`.
    pub work: Vec<AccumulatedWork>,
    pub steps: Vec<StepRecord>,
    pub stats: SolverStats,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn total_energy(&self, k: usize) -> f64 {
        self.energies[k].iter().sum()
    }

    /// `E_m` at output `k`.
    pub fn cumulative_energy(&self, k: usize, m: usize) -> f64 {
        self.energies[k][..=m].iter().sum()
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    pub(crate) fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|&u| (u - t).abs() <= tol)
    }
}

/// Scaled max norm of the error estimate `h Σ_j E_j k_j`, and the least entry of `ynew`.
fn error_norm(y: &[f64], ynew: &[f64], h: f64, k: &[Vec<f64>], opts: &SolverOptions) -> (f64, f64) {
    let mut a = [0.0; 7];
    let mut ks: [&[f64]; 7] = [&[]; 7];
    let mut s = 0;
    for (j, &c) in E.iter().enumerate() {
        if c != 0.0 {
            a[s] = c;
            ks[s] = &k[j];
            s += 1;
        }
    }
    match s {
        5 => error_norm_n::<5>(y, ynew, h, &a, &ks, opts),
        6 => error_norm_n::<6>(y, ynew, h, &a, &ks, opts),
        _ => error_norm_n::<7>(y, ynew, h, &a, &ks, opts),
    }
}

fn error_norm_n<const S: usize>(
    y: &[f64],
    ynew: &[f64],
    h: f64,
    a: &[f64; 7],
    ks: &[&[f64]; 7],
    opts: &SolverOptions,
) -> (f64, f64) {
    let (atol, rtol) = (opts.abs_tol, opts.rel_tol);
    let run = |lo: usize, hi: usize| {
        let y = &y[lo..hi];
        let yn = &ynew[lo..hi];
        let k: [&[f64]; S] = std::array::from_fn(|j| &ks[j][lo..hi]);
        let mut big = [0.0f64; 4];
        let mut low = [f64::INFINITY; 4];
        let mut nan = false;
        for i in 0..hi - lo {
            let mut acc = 0.0;
            for j in 0..S {
                acc += a[j] * k[j][i];
            }
            let sc = atol + rtol * y[i].abs().max(yn[i].abs());
            let v = (h * acc).abs() / sc;
            nan |= v.is_nan();
            let l = i % 4;
            big[l] = if v > big[l] { v } else { big[l] };
            low[l] = if yn[i] < low[l] { yn[i] } else { low[l] };
        }
        let err = if nan { f64::INFINITY } else { big[0].max(big[1]).max(big[2].max(big[3])) };
        (err, low[0].min(low[1]).min(low[2].min(low[3])))
    };
    if y.len() >= PAR_MIN {
        const CHUNK: usize = 1 << 13;
        (0..y.len().div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| run(c * CHUNK, ((c + 1) * CHUNK).min(y.len())))
            .reduce(|| (0.0, f64::INFINITY), |p, q| (p.0.max(q.0), p.1.min(q.1)))
    } else {
        run(0, y.len())
    }
}

/// Fold of `term(i)` over `0..len` in four interleaved lanes. Only for
/// order-independent `op`.
fn fold4(len: usize, init: f64, term: impl Fn(usize) -> f64, op: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [init; 4];
    let mut i = 0;
    while i + 4 <= len {
        for (l, a) in acc.iter_mut().enumerate() {
            *a = op(*a, term(i + l));
        }
        i += 4;
    }
    for j in i..len {
        acc[0] = op(acc[0], term(j));
    }
    op(op(acc[0], acc[1]), op(acc[2], acc[3]))
}

/// `out = base + h Σ_j coef_j k_j`, or `h Σ_j coef_j k_j` without a base.
/// Zero coefficients are skipped.
fn combine(out: &mut [f64], base: Option<&[f64]>, h: f64, coef: &[f64], k: &[Vec<f64>]) {
    let mut a = [0.0; 7];
    let mut ks: [&[f64]; 7] = [&[]; 7];
    let mut s = 0;
    for (j, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            a[s] = c;
            ks[s] = &k[j];
            s += 1;
        }
    }
    match s {
        1 => combine_n::<1>(out, base, h, &a, &ks),
        2 => combine_n::<2>(out, base, h, &a, &ks),
        3 => combine_n::<3>(out, base, h, &a, &ks),
        4 => combine_n::<4>(out, base, h, &a, &ks),
        5 => combine_n::<5>(out, base, h, &a, &ks),
        6 => combine_n::<6>(out, base, h, &a, &ks),
        7 => combine_n::<7>(out, base, h, &a, &ks),
        _ => match base {
            Some(y) => out.copy_from_slice(y),
            None => out.fill(0.0),
        },
    }
}

fn combine_n<const S: usize>(out: &mut [f64], base: Option<&[f64]>, h: f64, a: &[f64; 7], ks: &[&[f64]; 7]) {
    let run = |lo: usize, o: &mut [f64]| {
        let len = o.len();
        let k: [&[f64]; S] = std::array::from_fn(|j| &ks[j][lo..lo + len]);
        let sum = |i: usize| {
            let mut acc = 0.0;
            for j in 0..S {
                acc += a[j] * k[j][i];
            }
            acc
        };
        match base {
            Some(y) => {
                let y = &y[lo..lo + len];
                for (i, o) in o.iter_mut().enumerate() {
                    *o = y[i] + h * sum(i);
                }
            }
            None => {
                for (i, o) in o.iter_mut().enumerate() {
                    *o = h * sum(i);
                }
            }
        }
    };
    if out.len() >= PAR_MIN {
        const CHUNK: usize = 1 << 13;
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, o)| run(c * CHUNK, o));
    } else {
        run(0, out);
    }
}

/// Whether every negative entry of `ynew` is within the error scale of its step.
fn within_error(y: &[f64], ynew: &[f64], opts: &SolverOptions) -> bool {
    let ok = |i: usize| ynew[i] >= 0.0 || -ynew[i] <= opts.abs_tol + opts.rel_tol * y[i].abs();
    if y.len() >= PAR_MIN {
        (0..y.len()).into_par_iter().all(ok)
    } else {
        (0..y.len()).all(ok)
    }
}

fn min_value(y: &[f64]) -> f64 {
    if y.len() >= PAR_MIN {
        y.par_iter().copied().reduce(|| f64::INFINITY, f64::min)
    } else {
        fold4(y.len(), f64::INFINITY, |i| y[i], f64::min)
    }
}

fn initial_step(system: &CascadeSystem, t: f64, y: &[f64], f0: &[f64], opts: &SolverOptions) -> f64 {
    let sc = |i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let d0 = (0..y.len()).map(|i| y[i].abs() / sc(i)).fold(0.0, f64::max);
    let d1 = (0..y.len()).map(|i| f0[i].abs() / sc(i)).fold(0.0, f64::max);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = vec![0.0; y.len()];
    fill_by(&mut y1, |i| y[i] + h0 * f0[i]);
    let mut f1 = vec![0.0; y.len()];
    system.rhs(t + h0, &y1, &mut f1);
    let d2 = (0..y.len()).map(|i| (f1[i] - f0[i]).abs() / sc(i)).fold(0.0, f64::max) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates `system` from `(t_start, initial)` to `t_end`.
pub fn integrate_system(
    system: &CascadeSystem,
    initial: &[f64],
    t_start: f64,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    let n = system.len();
    if initial.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: initial.len(),
        });
    }
    if let Some(index) = initial.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { index });
    }
    if let Some(index) = initial.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeState {
            index,
            value: initial[index],
        });
    }
    if !(t_end > t_start) || !t_end.is_finite() || !t_start.is_finite() {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("must exceed the start time {t_start}"),
        });
    }

    let depth = system.depth();
    let m = system.rate_len();
    let mut y = initial.to_vec();
    let mut t = t_start;
    let mut q = vec![0.0; m];
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut r: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; m]).collect();
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut stats = SolverStats::default();

    system.rhs_and_rates(t, &y, &mut k[0], &mut r[0]);
    stats.rhs_evaluations += 1;
    let mut h = match opts.initial_step {
        Some(h) => h,
        None => initial_step(system, t, &y, &k[0], opts),
    }
    .min(opts.max_step)
    .min(t_end - t_start);

    let mut traj = Trajectory {
        params: *system.params(),
        times: Vec::new(),
        states: Vec::new(),
        energies: Vec::new(),
        work: Vec::new(),
        steps: Vec::new(),
        stats,
        final_state: Vec::new(),
    };
    let record = |traj: &mut Trajectory, t: f64, y: &[f64], q: &[f64]| {
        traj.times.push(t);
        traj.energies.push(system.generation_energies(y));
        traj.work.push(AccumulatedWork::from_raw(q, depth));
        if opts.record_states {
            traj.states.push(y.to_vec());
        }
    };
    record(&mut traj, t, &y, &q);
    if opts.record_steps {
        traj.steps.push(StepRecord {
            t,
            total_energy: system.total_energy(&y),
            min_value: min_value(&y),
        });
    }

    let mut outputs = Vec::new();
    if let Some(dt) = opts.output_interval {
        let mut i = 1usize;
        loop {
            let to = t_start + i as f64 * dt;
            if to >= t_end - 1e-12 * dt {
                break;
            }
            outputs.push(to);
            i += 1;
        }
    }
    outputs.push(t_end);
    let mut next_out = 0usize;

    let mut consecutive = 0usize;
    // Error of the previous accepted step, for the PI step-size controller.
    let mut err_old = 1e-4f64;
    let mut steps = 0usize;
    while next_out < outputs.len() {
        let target = outputs[next_out];
        if steps >= opts.max_steps {
            return Err(Error::MaxSteps {
                t,
                limit: opts.max_steps,
            });
        }
        h = h.min(opts.max_step);
        let h_proposed = h;
        let mut hit = false;
        if t + h >= target - 1e-13 * h.max(target.abs()) {
            h = target - t;
            hit = true;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }

        for s in 1..7 {
            let (done, rest) = k.split_at_mut(s);
            let buf = if s < 6 { &mut ytmp } else { &mut ynew };
            combine(buf, Some(&y), h, &A[s][..s], done);
            let arg = if s < 6 { &ytmp } else { &ynew };
            // Stages with a zero quadrature weight feed no flux.
            if s == 6 || B[s] != 0.0 {
                system.rhs_and_rates(t + C[s] * h, arg, &mut rest[0], &mut r[s]);
            } else {
                system.rhs(t + C[s] * h, arg, &mut rest[0]);
            }
        }
        stats.rhs_evaluations += 6;
        steps += 1;

        let (err, lowest) = error_norm(&y, &ynew, h, &k, opts);
        if !(err <= 1.0) {
            stats.rejected += 1;
            consecutive += 1;
            if consecutive > opts.max_rejections {
                return Err(Error::MaxRejections {
                    t,
                    count: consecutive,
                });
            }
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            h *= factor;
            continue;
        }

        if lowest < 0.0 && opts.positivity == PositivityMode::RejectAndHalve && within_error(&y, &ynew, opts) {
            // Negatives no larger than the accepted local error (typically nodes
            // leaving zero like a high power of t) are projected to zero.
            stats.projected_steps += 1;
            fill_by(&mut ytmp, |i| ynew[i].max(0.0));
            std::mem::swap(&mut ytmp, &mut ynew);
            system.rhs_and_rates(t + h, &ynew, &mut k[6], &mut r[6]);
            stats.rhs_evaluations += 1;
        } else if lowest < 0.0 {
            match opts.positivity {
                PositivityMode::RejectAndHalve => {
                    stats.rejected += 1;
                    stats.positivity_rejections += 1;
                    consecutive += 1;
                    if consecutive > opts.max_rejections {
                        return Err(Error::MaxRejections {
                            t,
                            count: consecutive,
                        });
                    }
                    h *= 0.5;
                    continue;
                }
                PositivityMode::ClampToZero => {
                    stats.clamped_steps += 1;
                    stats.max_clamped = stats.max_clamped.min(lowest);
                    for v in ynew.iter_mut() {
                        if *v < 0.0 {
                            *v = 0.0;
                        }
                    }
                    system.rhs_and_rates(t + h, &ynew, &mut k[6], &mut r[6]);
                    stats.rhs_evaluations += 1;
                }
            }
        }
        if let Some(index) = ynew.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { index });
        }

        for (idx, qv) in q.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, b) in B.iter().enumerate() {
                if *b != 0.0 {
                    acc += b * r[j][idx];
                }
            }
            *qv += h * acc;
        }
        t = if hit { target } else { t + h };
        std::mem::swap(&mut y, &mut ynew);
        k.swap(0, 6);
        r.swap(0, 6);
        stats.accepted += 1;

        let grow = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-(0.2 - 0.75 * PI_BETA)) * err_old.powf(PI_BETA)).clamp(0.2, 5.0)
        };
        err_old = err.max(1e-4);
        let grow = if consecutive > 0 { grow.min(1.0) } else { grow };
        consecutive = 0;
        h *= grow;
        if hit {
            // A step clipped to an output time says nothing against the proposal.
            h = h.max(h_proposed);
        }

        if opts.record_steps {
            traj.steps.push(StepRecord {
                t,
                total_energy: system.total_energy(&y),
                min_value: min_value(&y),
            });
        }
        if hit {
            record(&mut traj, t, &y, &q);
            next_out += 1;
        }
    }

    traj.stats = stats;
    traj.final_state = y;
    Ok(traj)
}

/// Integrates a tree state from `t = 0` under Galerkin closure.
pub fn integrate(initial: &TreeState, params: &ModelParams, t_end: f64, opts: &SolverOptions) -> Result<Trajectory> {
    let p = params.with_depth(initial.shape().depth());
    if p.branching != initial.shape().branching() {
        return Err(Error::ParameterMismatch(format!(
            "state branching {} differs from params branching {}",
            initial.shape().branching(),
            p.branching
        )));
    }
    let system = CascadeSystem::new(p, Closure::Galerkin)?;
    integrate_system(&system, initial.values(), 0.0, t_end, opts)
}

/// Integrates a classic state from `t = 0` under Galerkin closure.
pub fn integrate_classic(
    initial: &ClassicState,
    params: &ModelParams,
    t_end: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    let p = ModelParams {
        branching: 1,
        depth: initial.depth(),
        ..*params
    };
    let system = CascadeSystem::new(p, Closure::Galerkin)?;
    integrate_system(&system, initial.values(), 0.0, t_end, opts)
}
