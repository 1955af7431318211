//! Subcommand drivers.

use std::path::{Path, PathBuf};

use dyadic_core::dynamics::{
    balance_residual, dissipation_time_bound, integrate_system, CascadeSystem, Closure, Trajectory,
};
use dyadic_core::lift::{lift_state, verify_lift_equivariance, LiftSpec};
use dyadic_core::params::alpha_tilde;
use dyadic_core::selfsimilar::{lift_selfsimilar, solve_selfsimilar_with, SelfSimilarOptions, SelfSimilarProfile};
use dyadic_core::stationary::{
    asymptotic_flux, inviscid_classic_profile, inviscid_stationary_profile, inviscid_tree_profile,
    solve_viscous_stationary_with, StationaryProfile,
};
use dyadic_core::{pow2, ClassicState, ModelParams, TreeShape, TreeState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ClosureSpec, InitialSpec, Mode, Model, RunConfig};
use crate::error::CliError;
use crate::output::{self, Row};
use crate::spectrum::{fit_spectrum, SpectrumFit};

/// Initial values together with the closure `auto` resolves to.
struct Initial {
    values: Vec<f64>,
    closure: Closure,
    closure_name: &'static str,
}

fn resolve_closure(cfg: &RunConfig, selfsimilar: Option<Closure>, stationary: Option<Closure>) -> (Closure, &'static str) {
    let p = &cfg.params;
    let exact_tail = |c: Option<Closure>| c.filter(|_| p.f == 0.0 && p.nu == 0.0);
    match cfg.closure {
        ClosureSpec::Galerkin => (Closure::Galerkin, "galerkin"),
        ClosureSpec::SelfsimilarTail => (selfsimilar.expect("validated"), "selfsimilar_tail"),
        ClosureSpec::StationaryTail => match stationary {
            Some(c) => (c, "stationary_tail"),
            None => (Closure::Galerkin, "galerkin"),
        },
        ClosureSpec::Auto => {
            if let Some(c) = exact_tail(selfsimilar) {
                (c, "selfsimilar_tail")
            } else if let Some(c) = stationary.filter(|_| p.nu == 0.0) {
                (c, "stationary_tail")
            } else {
                (Closure::Galerkin, "galerkin")
            }
        }
    }
}

fn selfsimilar_profile(t0: f64, beta: f64, n_max: usize, cfg: &RunConfig) -> Result<SelfSimilarProfile, CliError> {
    let opts = SelfSimilarOptions {
        n_max,
        tol: cfg.selfsimilar.tol,
        ..SelfSimilarOptions::default()
    };
    Ok(solve_selfsimilar_with(t0, beta, &opts)?)
}

fn read_dump(path: &Path) -> Result<TreeState, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Config(format!("initial.path: cannot read {}: {e}", path.display())))?;
    output::decode_state(&bytes).map_err(|e| CliError::Config(format!("initial.path: {e}")))
}

fn random_values(shape: &TreeShape, seed: u64, scale: f64, decay: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(shape.len());
    for g in 0..=shape.depth() {
        let s = scale * decay.powi(g as i32);
        for _ in shape.generation_range(g) {
            values.push(rng.gen::<f64>() * s);
        }
    }
    values
}

/// Classic initial data with exponent `beta` and forcing `f` on shells `0..=depth`.
/// `root` is the classic root value (the tree root value divided by the lift scale).
fn classic_initial(cfg: &RunConfig, beta: f64, f: f64, root_scale: f64) -> Result<Initial, CliError> {
    let depth = cfg.params.depth;
    let mut selfsimilar = None;
    let mut stationary = None;
    let values = match &cfg.initial {
        InitialSpec::Zero => vec![0.0; depth + 1],
        InitialSpec::RootOnly { value } => {
            let mut v = vec![0.0; depth + 1];
            v[0] = value * root_scale;
            v
        }
        InitialSpec::StationaryInviscid => {
            let y = inviscid_classic_profile(f, beta, depth + 1)?.into_values();
            stationary = Some(Closure::Fixed { values: vec![y[depth + 1]] });
            y[..=depth].to_vec()
        }
        InitialSpec::Selfsimilar { t0 } => {
            let n_max = cfg.selfsimilar.n_max.max(depth + 1);
            let prof = selfsimilar_profile(*t0, beta, n_max, cfg)?;
            selfsimilar = Some(prof.tail_closure(depth)?);
            prof.classic_state_at(0.0, depth)?.into_values()
        }
        InitialSpec::File { path } => {
            let x = read_dump(path)?;
            let shape = x.shape();
            if shape.branching() != 1 || shape.depth() != depth {
                return Err(CliError::Config(format!(
                    "initial.path: dump has branching {} depth {}, expected branching 1 depth {depth}",
                    shape.branching(),
                    shape.depth()
                )));
            }
            x.into_values()
        }
        InitialSpec::RandomPositive {
            seed,
            scale,
            generation_decay,
        } => random_values(&TreeShape::new(1, depth)?, *seed, *scale, *generation_decay),
    };
    let (closure, closure_name) = resolve_closure(cfg, selfsimilar, stationary);
    Ok(Initial {
        values,
        closure,
        closure_name,
    })
}

fn tree_initial(cfg: &RunConfig) -> Result<Initial, CliError> {
    let p = cfg.model_params();
    let shape = TreeShape::new(p.branching, p.depth)?;
    let at = alpha_tilde(p.branching);
    let mut selfsimilar = None;
    let mut stationary = None;
    let values = match &cfg.initial {
        InitialSpec::Zero => vec![0.0; shape.len()],
        InitialSpec::RootOnly { value } => {
            let mut v = vec![0.0; shape.len()];
            v[0] = *value;
            v
        }
        InitialSpec::StationaryInviscid => {
            let prof = inviscid_tree_profile(p.f, p.alpha, at, p.depth)?;
            let e = (2.0 * at + p.alpha) / 3.0;
            let below = p.f * pow2(-((p.depth + 2) as f64) * e);
            let n = TreeShape::new(p.branching, p.depth + 1)?.generation_size(p.depth + 1);
            stationary = Some(Closure::Fixed { values: vec![below; n] });
            prof.state.into_values()
        }
        InitialSpec::Selfsimilar { t0 } => {
            let n_max = cfg.selfsimilar.n_max.max(p.depth + 1);
            let base = selfsimilar_profile(*t0, p.alpha - at, n_max, cfg)?;
            let prof = lift_selfsimilar(&base, at, p.depth + 1)?;
            selfsimilar = Some(prof.tail_closure(p.depth)?);
            prof.tree_state_at(0.0, p.depth)?.into_values()
        }
        InitialSpec::File { path } => {
            let x = read_dump(path)?;
            if x.shape() != &shape {
                return Err(CliError::Config(format!(
                    "initial.path: dump has branching {} depth {} ({} nodes), config needs branching {} depth {} ({} nodes)",
                    x.shape().branching(),
                    x.shape().depth(),
                    x.shape().len(),
                    shape.branching(),
                    shape.depth(),
                    shape.len()
                )));
            }
            x.into_values()
        }
        InitialSpec::RandomPositive {
            seed,
            scale,
            generation_decay,
        } => random_values(&shape, *seed, *scale, *generation_decay),
    };
    let (closure, closure_name) = resolve_closure(cfg, selfsimilar, stationary);
    Ok(Initial {
        values,
        closure,
        closure_name,
    })
}

/// Classic counterpart of a generation-symmetric tree configuration.
struct SymmetricSetup {
    spec: LiftSpec,
    params: ModelParams,
    initial: Initial,
}

fn symmetric_setup(cfg: &RunConfig) -> Result<SymmetricSetup, CliError> {
    let tree = cfg.model_params();
    let spec = LiftSpec::for_tree(&tree)?;
    let params = spec.classic_params(&tree);
    let initial = classic_initial(cfg, spec.beta, params.f, 1.0 / spec.scale(0))?;
    Ok(SymmetricSetup { spec, params, initial })
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub accepted: usize,
    pub rejected: usize,
    pub positivity_rejections: usize,
    pub projected_steps: usize,
    pub clamped_steps: usize,
    pub max_clamped: f64,
    pub rhs_evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DumpReport {
    pub time: f64,
    pub path: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: RunConfig,
    pub closure: &'static str,
    pub final_time: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// `p` in `E ~ t^{-p}`, fitted over the emitted times in `[t_end/2, t_end]`.
    pub decay_exponent: Option<f64>,
    /// Largest negative value ever accepted (zero for positive runs).
    pub max_positivity_violation: f64,
    pub stats: StatsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<DumpReport>,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub depth: usize,
    pub rows: Vec<Row>,
    pub summary: Summary,
    /// State at the requested dump time, with its time.
    pub dump: Option<(f64, TreeState)>,
}

impl SimulateOutcome {
    pub fn csv(&self) -> String {
        output::trajectory_csv(self.depth, &self.rows)
    }
}

fn rows_of(traj: &Trajectory, factor: f64) -> Result<Vec<Row>, CliError> {
    let depth = traj.depth();
    let t_start = traj.times[0];
    let mut rows = Vec::with_capacity(traj.times.len());
    for (k, &t) in traj.times.iter().enumerate() {
        let residual = if k == 0 { 0.0 } else { balance_residual(traj, t_start, t)? };
        rows.push(Row {
            t,
            energies: traj.energies[k].iter().map(|e| e * factor).collect(),
            flux: traj.work[k].flux[..depth].iter().map(|f| f * factor).collect(),
            residual: residual * factor,
        });
    }
    Ok(rows)
}

/// Least-squares `p` in `ln E = c − p ln t` over the emitted rows with `t ≥ t_end/2`.
pub fn decay_exponent(rows: &[Row], t_end: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0.0 && r.t >= 0.5 * t_end && r.total_energy() > 0.0)
        .map(|r| (r.t.ln(), r.total_energy().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    Some(-sxy / sxx)
}

fn dump_index(traj: &Trajectory, t: f64) -> Result<usize, CliError> {
    traj.times.iter().position(|&s| s >= t).ok_or_else(|| {
        CliError::Config(format!(
            "--dump-state {t} is after the end of the run at {}",
            traj.times.last().copied().unwrap_or(0.0)
        ))
    })
}

/// Runs the configured simulation without writing files.
pub fn simulate(cfg: &RunConfig, dump_at: Option<f64>) -> Result<SimulateOutcome, CliError> {
    if let Some(t) = dump_at {
        if !(t >= 0.0 && t <= cfg.t_end) {
            return Err(CliError::Config(format!("--dump-state {t} is outside [0, t_end]")));
        }
    }
    let mut opts = cfg.solver_options();
    opts.record_states = dump_at.is_some();
    let depth = cfg.params.depth;
    let (traj, factor, closure_name, lift) = match cfg.mode {
        Mode::Symmetric => {
            let s = symmetric_setup(cfg)?;
            let system = CascadeSystem::new(s.params, s.initial.closure)?;
            let traj = integrate_system(&system, &s.initial.values, 0.0, cfg.t_end, &opts)?;
            let factor = pow2(-4.0 * s.spec.alpha_tilde);
            (traj, factor, s.initial.closure_name, Some(s.spec))
        }
        Mode::Full => {
            let init = match cfg.model {
                Model::Tree => tree_initial(cfg)?,
                Model::Classic => classic_initial(cfg, cfg.params.alpha, cfg.params.f, 1.0)?,
            };
            let system = CascadeSystem::new(cfg.model_params(), init.closure)?;
            let traj = integrate_system(&system, &init.values, 0.0, cfg.t_end, &opts)?;
            (traj, 1.0, init.closure_name, None)
        }
    };
    let rows = rows_of(&traj, factor)?;
    let dump = match dump_at {
        None => None,
        Some(t) => {
            let k = dump_index(&traj, t)?;
            let values = traj.states[k].clone();
            let state = match lift {
                Some(spec) => lift_state(&ClassicState::new(values)?, &spec, depth)?,
                None => TreeState::new(TreeShape::new(cfg.branching(), depth)?, values)?,
            };
            Some((traj.times[k], state))
        }
    };
    let min_value = traj.steps.iter().map(|s| s.min_value).fold(f64::INFINITY, f64::min);
    let s = &traj.stats;
    let summary = Summary {
        config: cfg.clone(),
        closure: closure_name,
        final_time: *traj.times.last().unwrap(),
        initial_energy: rows[0].total_energy(),
        final_energy: rows.last().unwrap().total_energy(),
        decay_exponent: decay_exponent(&rows, cfg.t_end),
        max_positivity_violation: (-min_value).max(0.0),
        stats: StatsReport {
            accepted: s.accepted,
            rejected: s.rejected,
            positivity_rejections: s.positivity_rejections,
            projected_steps: s.projected_steps,
            clamped_steps: s.clamped_steps,
            max_clamped: s.max_clamped,
            rhs_evaluations: s.rhs_evaluations,
        },
        dump: None,
    };
    Ok(SimulateOutcome {
        depth,
        rows,
        summary,
        dump,
    })
}

fn out_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Output {
        path: dir.display().to_string(),
        source,
    })?;
    Ok(dir)
}

pub fn run_simulate(cfg: &RunConfig, out: Option<&Path>, dump_at: Option<f64>) -> Result<SimulateOutcome, CliError> {
    let mut outcome = simulate(cfg, dump_at)?;
    let dir = out_dir(cfg, out)?;
    output::write_file(&dir.join(&cfg.output.trajectory), outcome.csv())?;
    if let Some((t, state)) = &outcome.dump {
        let path = dir.join("state.dyad");
        output::write_file(&path, output::encode_state(state))?;
        outcome.summary.dump = Some(DumpReport {
            time: *t,
            path: path.display().to_string(),
        });
    }
    output::write_json(&dir.join(&cfg.output.summary), &outcome.summary)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub model: Model,
    pub regime: String,
    pub beta: f64,
    pub gamma: f64,
    pub nu: f64,
    /// Classic forcing (`2^{α̃} f` for the tree model).
    pub f: f64,
    pub mu: f64,
    /// `ν^{-1} 2^{β/3} f`; null for the inviscid profile.
    pub g: Option<f64>,
    /// `1/(1 − 2^μ)` when `μ < 0`.
    pub threshold: Option<f64>,
    pub z0: Option<f64>,
    pub z_limit: Option<f64>,
    /// `2^{-4β/3} ν³ z³` when the limit is positive.
    pub asymptotic_flux: Option<f64>,
    pub certificate: &'static str,
    pub n_max: usize,
}

pub struct StationaryOutcome {
    pub profile: StationaryProfile,
    pub report: RegimeReport,
}

pub fn stationary(cfg: &RunConfig) -> Result<StationaryOutcome, CliError> {
    let p = cfg.model_params();
    let (beta, f) = match cfg.model {
        Model::Classic => (p.alpha, p.f),
        Model::Tree => {
            let spec = LiftSpec::for_tree(&p)?;
            if !(spec.beta > 0.0) {
                return Err(CliError::Config(format!(
                    "params.alpha: must exceed alpha_tilde = {}",
                    spec.alpha_tilde
                )));
            }
            (spec.beta, spec.classic_forcing(p.f))
        }
    };
    let opts = cfg.stationary_options();
    let profile = if p.nu == 0.0 {
        inviscid_stationary_profile(f, beta, p.gamma, opts.n_max)?
    } else {
        solve_viscous_stationary_with(f, p.nu, beta, p.gamma, &opts)?
    };
    let finite = |v: f64| Some(v).filter(|v| v.is_finite());
    let report = RegimeReport {
        model: cfg.model,
        regime: profile.regime.as_str().to_string(),
        beta,
        gamma: p.gamma,
        nu: p.nu,
        f,
        mu: profile.mu,
        g: finite(profile.g),
        threshold: profile.threshold,
        z0: finite(profile.z0()),
        z_limit: profile.z_limit,
        asymptotic_flux: profile.z_limit.map(|z| asymptotic_flux(z, beta, p.nu)),
        certificate: profile.certificate,
        n_max: profile.n_max(),
    };
    Ok(StationaryOutcome { profile, report })
}

pub fn run_stationary(cfg: &RunConfig, out: Option<&Path>) -> Result<StationaryOutcome, CliError> {
    let outcome = stationary(cfg)?;
    let dir = out_dir(cfg, out)?;
    let prof = &outcome.profile;
    output::write_file(&dir.join("profile.csv"), output::profile_csv(&prof.z, prof.f, &prof.y))?;
    output::write_json(&dir.join("regime.json"), &outcome.report)?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfSimilarReport {
    pub t0: f64,
    pub beta: f64,
    pub alpha: f64,
    pub branching: usize,
    pub n0: usize,
    pub b0: f64,
    pub n_max: usize,
    pub bracket: [f64; 2],
    pub algebraic_residual: f64,
    /// `Σ a_j²` over the configured depth, so `E(t) = energy_coefficient / (t − t0)²`.
    pub energy_coefficient: f64,
}

pub fn selfsimilar(cfg: &RunConfig) -> Result<(SelfSimilarProfile, SelfSimilarReport), CliError> {
    let p = cfg.model_params();
    let s = &cfg.selfsimilar;
    if !(s.t0 < 0.0) {
        return Err(CliError::Config("selfsimilar.t0: the pole must lie before t = 0".into()));
    }
    let at = alpha_tilde(p.branching);
    let base = selfsimilar_profile(s.t0, p.alpha - at, s.n_max, cfg)?;
    let depth = p.depth.min(s.n_max);
    let prof = match cfg.model {
        Model::Classic => base,
        Model::Tree => lift_selfsimilar(&base, at, depth)?,
    };
    let report = SelfSimilarReport {
        t0: prof.t0,
        beta: prof.beta,
        alpha: prof.alpha(),
        branching: prof.branching(),
        n0: prof.n0,
        b0: prof.b0(),
        n_max: prof.n_max(),
        bracket: [prof.bracket.0, prof.bracket.1],
        algebraic_residual: prof.algebraic_residual(),
        energy_coefficient: prof.energy_coefficient(depth)?,
    };
    Ok((prof, report))
}

pub fn run_selfsimilar(cfg: &RunConfig, out: Option<&Path>) -> Result<SelfSimilarReport, CliError> {
    let (prof, report) = selfsimilar(cfg)?;
    let dir = out_dir(cfg, out)?;
    let a = prof.coefficients(prof.n_max())?;
    output::write_file(&dir.join("selfsimilar.csv"), output::indexed_csv("n,b_n,a_n", &[&prof.b, &a]))?;
    output::write_json(&dir.join("selfsimilar.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftReport {
    pub branching: usize,
    pub alpha_tilde: f64,
    pub alpha: f64,
    pub beta: f64,
    pub classic_forcing: f64,
    pub tree_forcing: f64,
    /// Largest node defect between the tree RHS of the lift and the lifted classic RHS.
    pub defect: f64,
}

pub fn lift(cfg: &RunConfig) -> Result<(ClassicState, TreeState, LiftReport), CliError> {
    if cfg.model != Model::Tree {
        return Err(CliError::Config("model: lift targets the tree model".into()));
    }
    let tree = cfg.model_params();
    let spec = LiftSpec::for_tree(&tree)?;
    let classic = spec.classic_params(&tree);
    let init = classic_initial(cfg, spec.beta, classic.f, 1.0 / spec.scale(0))?;
    let y = ClassicState::new(init.values)?;
    let x = lift_state(&y, &spec, tree.depth)?;
    let report = LiftReport {
        branching: spec.branching(),
        alpha_tilde: spec.alpha_tilde,
        alpha: spec.alpha(),
        beta: spec.beta,
        classic_forcing: classic.f,
        tree_forcing: tree.f,
        defect: verify_lift_equivariance(&y, &spec, &tree)?,
    };
    Ok((y, x, report))
}

pub fn run_lift(cfg: &RunConfig, out: Option<&Path>) -> Result<LiftReport, CliError> {
    let (y, x, report) = lift(cfg)?;
    let dir = out_dir(cfg, out)?;
    let per_gen: Vec<f64> = (0..=x.shape().depth()).map(|g| x.generation(g)[0]).collect();
    output::write_file(&dir.join("lift.csv"), output::indexed_csv("n,Y_n,X_n", &[y.values(), &per_gen]))?;
    output::write_file(&dir.join("lifted.dyad"), output::encode_state(&x))?;
    output::write_json(&dir.join("lift.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct DissipationReport {
    pub epsilon: f64,
    pub eta: f64,
    pub alpha: f64,
    pub alpha_tilde: f64,
    pub time: f64,
}

pub fn dissipation(cfg: &RunConfig) -> Result<DissipationReport, CliError> {
    let p = cfg.model_params();
    let d = &cfg.dissipation;
    let at = alpha_tilde(p.branching);
    let time = dissipation_time_bound(d.epsilon, d.eta, p.alpha, at)
        .map_err(|e| CliError::Config(format!("dissipation: {e}")))?;
    Ok(DissipationReport {
        epsilon: d.epsilon,
        eta: d.eta,
        alpha: p.alpha,
        alpha_tilde: at,
        time,
    })
}

pub fn run_dissipation(cfg: &RunConfig, out: Option<&Path>) -> Result<DissipationReport, CliError> {
    let report = dissipation(cfg)?;
    let dir = out_dir(cfg, out)?;
    output::write_json(&dir.join("dissipation.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub eta: f64,
    pub residual: f64,
    pub window: [usize; 2],
}

/// Fits the spectrum of the configured initial state.
pub fn fit(cfg: &RunConfig) -> Result<(SpectrumFit, FitReport), CliError> {
    let p = cfg.model_params();
    let init = match cfg.model {
        Model::Tree => tree_initial(cfg)?,
        Model::Classic => classic_initial(cfg, p.alpha, p.f, 1.0)?,
    };
    let state = TreeState::new(TreeShape::new(p.branching, p.depth)?, init.values)?;
    let window = cfg.fit.window.map_or((0, p.depth), |[lo, hi]| (lo, hi));
    let fit = fit_spectrum(&state, window)?;
    let report = FitReport {
        eta: fit.eta,
        residual: fit.residual,
        window: [window.0, window.1],
    };
    Ok((fit, report))
}

pub fn run_fit(cfg: &RunConfig, out: Option<&Path>) -> Result<FitReport, CliError> {
    let (fit, report) = fit(cfg)?;
    let dir = out_dir(cfg, out)?;
    output::write_file(&dir.join("spectrum.csv"), output::indexed_csv("n,rms", &[&fit.rms]))?;
    output::write_json(&dir.join("fit.json"), &report)?;
    Ok(report)
}
