//! JSON run configuration. Unknown fields are rejected everywhere.

use std::path::{Path, PathBuf};

use dyadic_core::dynamics::{PositivityMode, SolverOptions};
use dyadic_core::stationary::StationaryOptions;
use dyadic_core::{BranchingMode, ModelParams, TreeShape};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Tree,
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    /// Simulate the classic model and report its lift generation by generation.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    /// Tree exponent α; for the classic model this is β.
    #[serde(alias = "beta")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub f: f64,
    /// Defaults to 2 for the tree model and must be 1 (or absent) for the classic model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<usize>,
    pub depth: usize,
    /// Accept branching factors that are not powers of two.
    #[serde(default, skip_serializing_if = "is_false")]
    pub permissive_branching: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    #[default]
    Zero,
    RootOnly {
        value: f64,
    },
    StationaryInviscid,
    Selfsimilar {
        t0: f64,
    },
    /// A state dump in the `DYAD` binary format.
    File {
        path: PathBuf,
    },
    /// `X_j ~ U(0, scale) · generation_decay^{|j|}`, drawn in node order.
    RandomPositive {
        seed: u64,
        scale: f64,
        #[serde(default = "one")]
        generation_decay: f64,
    },
}

impl InitialSpec {
    pub fn is_generation_symmetric(&self) -> bool {
        !matches!(self, InitialSpec::File { .. } | InitialSpec::RandomPositive { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosureSpec {
    /// Self-similar tail for self-similar data, stationary tail for stationary data,
    /// Galerkin otherwise.
    #[default]
    Auto,
    Galerkin,
    SelfsimilarTail,
    StationaryTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    #[default]
    RejectAndHalve,
    ClampToZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_step: Option<f64>,
    #[serde(default)]
    pub positivity: Positivity,
    #[serde(default = "default_max_rejections")]
    pub max_rejections: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_step: None,
            initial_step: None,
            positivity: Positivity::default(),
            max_rejections: default_max_rejections(),
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    #[serde(default = "default_stationary_n_max")]
    pub n_max: usize,
    #[serde(default = "default_bisection_tol")]
    pub bisection_tol: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_bracket: Option<[f64; 2]>,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            n_max: default_stationary_n_max(),
            bisection_tol: default_bisection_tol(),
            max_iterations: default_max_iterations(),
            initial_bracket: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfSimilarConfig {
    /// Pole time for the `selfsimilar` subcommand; initial data carries its own.
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_selfsimilar_n_max")]
    pub n_max: usize,
    #[serde(default = "default_bisection_tol")]
    pub tol: f64,
}

impl Default for SelfSimilarConfig {
    fn default() -> Self {
        Self {
            t0: default_t0(),
            n_max: default_selfsimilar_n_max(),
            tol: default_bisection_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipationConfig {
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub eta: f64,
}

impl Default for DissipationConfig {
    fn default() -> Self {
        Self { epsilon: 1.0, eta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Inclusive generation window; the whole tree when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: default_trajectory(),
            summary: default_summary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(default)]
    pub mode: Mode,
    pub params: ParamsConfig,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "one")]
    pub t_end: f64,
    /// Spacing of the emitted rows; only `0` and `t_end` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_interval: Option<f64>,
    #[serde(default)]
    pub closure: ClosureSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub stationary: StationaryConfig,
    #[serde(default)]
    pub selfsimilar: SelfSimilarConfig,
    #[serde(default)]
    pub dissipation: DissipationConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn is_false(b: &bool) -> bool {
    !*b
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-14
}
fn default_max_rejections() -> usize {
    60
}
fn default_max_steps() -> usize {
    50_000_000
}
fn default_stationary_n_max() -> usize {
    60
}
fn default_selfsimilar_n_max() -> usize {
    25
}
fn default_bisection_tol() -> f64 {
    1e-12
}
fn default_max_iterations() -> usize {
    500
}
fn default_t0() -> f64 {
    -1.0
}
fn default_trajectory() -> String {
    "trajectory.csv".into()
}
fn default_summary() -> String {
    "summary.json".into()
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn branching(&self) -> usize {
        match self.model {
            Model::Classic => 1,
            Model::Tree => self.params.branching.unwrap_or(2),
        }
    }

    pub fn branching_mode(&self) -> BranchingMode {
        if self.params.permissive_branching {
            BranchingMode::Permissive
        } else {
            BranchingMode::PowerOfTwo
        }
    }

    /// Model parameters, with `alpha` holding β for the classic model.
    pub fn model_params(&self) -> ModelParams {
        let p = &self.params;
        ModelParams {
            alpha: p.alpha,
            gamma: p.gamma,
            nu: p.nu,
            f: p.f,
            branching: self.branching(),
            depth: p.depth,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            max_step: s.max_step.unwrap_or(f64::INFINITY),
            initial_step: s.initial_step,
            positivity: match s.positivity {
                Positivity::RejectAndHalve => PositivityMode::RejectAndHalve,
                Positivity::ClampToZero => PositivityMode::ClampToZero,
            },
            max_rejections: s.max_rejections,
            max_steps: s.max_steps,
            output_interval: self.output_interval,
            record_states: false,
            record_steps: true,
        }
    }

    pub fn stationary_options(&self) -> StationaryOptions {
        let s = &self.stationary;
        StationaryOptions {
            n_max: s.n_max,
            bisection_tol: s.bisection_tol,
            max_iterations: s.max_iterations,
            initial_guess: None,
            initial_bracket: s.initial_bracket.map(|[a, b]| (a, b)),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, msg: String| Err(CliError::Config(format!("{path}: {msg}")));
        if self.model == Model::Classic && self.params.branching.is_some_and(|b| b != 1) {
            return bad("params.branching", "the classic model has branching 1".into());
        }
        let params = self.model_params();
        if let Err(e) = params.validate(self.branching_mode()) {
            return bad("params", e.to_string());
        }
        if let Err(e) = TreeShape::new(params.branching, params.depth) {
            return bad("params.depth", e.to_string());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end", "must be positive and finite".into());
        }
        if let Err(e) = self.solver_options().validate() {
            return bad("solver", e.to_string());
        }
        match &self.initial {
            InitialSpec::RootOnly { value } if !(*value >= 0.0 && value.is_finite()) => {
                return bad("initial.value", "must be finite and non-negative".into());
            }
            InitialSpec::Selfsimilar { t0 } if !(*t0 < 0.0) => {
                return bad("initial.t0", "the pole must lie before t = 0".into());
            }
            InitialSpec::RandomPositive {
                scale,
                generation_decay,
                ..
            } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad("initial.scale", "must be positive and finite".into());
                }
                if !(*generation_decay > 0.0 && generation_decay.is_finite()) {
                    return bad("initial.generation_decay", "must be positive and finite".into());
                }
            }
            _ => {}
        }
        if self.mode == Mode::Symmetric {
            if self.model != Model::Tree {
                return bad("mode", "symmetric mode applies to the tree model".into());
            }
            if !self.initial.is_generation_symmetric() {
                return bad("initial", "symmetric mode needs generation-symmetric initial data".into());
            }
        }
        let lifted = self.mode == Mode::Symmetric
            || matches!(
                self.initial,
                InitialSpec::Selfsimilar { .. } | InitialSpec::StationaryInviscid
            );
        if self.model == Model::Tree && lifted && !(params.beta() > 0.0) {
            return bad(
                "params.alpha",
                format!("must exceed alpha_tilde = {} for lifted data", params.alpha_tilde()),
            );
        }
        match (self.closure, &self.initial) {
            (ClosureSpec::SelfsimilarTail, InitialSpec::Selfsimilar { .. }) => {
                if self.params.f != 0.0 || self.params.nu != 0.0 {
                    return bad("closure", "selfsimilar_tail needs f = nu = 0".into());
                }
            }
            (ClosureSpec::SelfsimilarTail, _) => {
                return bad("closure", "selfsimilar_tail needs selfsimilar initial data".into());
            }
            (ClosureSpec::StationaryTail, _) if self.params.nu != 0.0 => {
                return bad("closure", "stationary_tail is the inviscid profile and needs nu = 0".into());
            }
            _ => {}
        }
        if !(self.selfsimilar.tol > 0.0) {
            return bad("selfsimilar.tol", "must be positive".into());
        }
        if !(self.stationary.bisection_tol > 0.0) {
            return bad("stationary.bisection_tol", "must be positive".into());
        }
        if let Some([lo, hi]) = self.fit.window {
            if lo >= hi || hi > params.depth {
                return bad("fit.window", format!("need lo < hi <= depth, got [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}
