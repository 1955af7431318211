//! Classic to tree lifting: `X_j = 2^{-(|j|+2)α̃} Y_{|j|}` with `α = β + α̃`.
//!
//! The forcing alias `Y_{-1}` is lifted too, so a classic solution forced by `f`
//! becomes a tree solution forced by `2^{-α̃} f`.

use crate::dynamics::{rhs_classic, rhs_tree};
use crate::error::{Error, Result};
use crate::params::{alpha_tilde, pow2, ModelParams};
use crate::state::{ClassicState, TreeState};
use crate::tree::TreeShape;

/// Relative spread tolerated inside a generation by [`project_state`].
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftSpec {
    pub alpha_tilde: f64,
    pub beta: f64,
    branching: usize,
}

impl LiftSpec {
    pub fn new(branching: usize, beta: f64) -> Result<Self> {
        if branching == 0 {
            return Err(Error::InvalidParameter {
                name: "branching",
                reason: "must be at least 1".into(),
            });
        }
        if !beta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be finite".into(),
            });
        }
        Ok(Self {
            alpha_tilde: alpha_tilde(branching),
            beta,
            branching,
        })
    }

    /// Lift matching tree parameters: `β = α − α̃`.
    pub fn for_tree(params: &ModelParams) -> Result<Self> {
        Self::new(params.branching, params.beta())
    }

    pub fn alpha(&self) -> f64 {
        self.beta + self.alpha_tilde
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    /// Scale factor `2^{-(g+2)α̃}` of generation `g`.
    pub fn scale(&self, g: usize) -> f64 {
        pow2(-((g + 2) as f64) * self.alpha_tilde)
    }

    pub fn tree_forcing(&self, classic_f: f64) -> f64 {
        classic_f * pow2(-self.alpha_tilde)
    }

    pub fn classic_forcing(&self, tree_f: f64) -> f64 {
        tree_f * pow2(self.alpha_tilde)
    }

    /// Tree parameters for the lift of a classic run with `classic` parameters.
    pub fn tree_params(&self, classic: &ModelParams) -> ModelParams {
        ModelParams {
            alpha: self.alpha(),
            gamma: classic.gamma,
            nu: classic.nu,
            f: self.tree_forcing(classic.f),
            branching: self.branching,
            depth: classic.depth,
        }
    }

    /// Classic parameters whose lift is the tree run with `tree` parameters.
    pub fn classic_params(&self, tree: &ModelParams) -> ModelParams {
        ModelParams {
            alpha: self.beta,
            gamma: tree.gamma,
            nu: tree.nu,
            f: self.classic_forcing(tree.f),
            branching: 1,
            depth: tree.depth,
        }
    }
}

/// Per-generation lifted values `2^{-(n+2)α̃} Y_n` for `n = 0..=depth`.
pub fn lift_generations(y: &[f64], spec: &LiftSpec, depth: usize) -> Result<Vec<f64>> {
    if y.len() < depth + 1 {
        return Err(Error::DepthMismatch {
            required: depth + 1,
            available: y.len(),
        });
    }
    Ok((0..=depth).map(|g| y[g] * spec.scale(g)).collect())
}

pub fn lift_state(y: &ClassicState, spec: &LiftSpec, depth: usize) -> Result<TreeState> {
    let per_gen = lift_generations(y.values(), spec, depth)?;
    let shape = TreeShape::new(spec.branching, depth)?;
    TreeState::from_generations(shape, &per_gen)
}

/// Inverse of [`lift_state`] on generation-symmetric states.
pub fn project_state(x: &TreeState) -> Result<ClassicState> {
    let shape = x.shape();
    let spec = LiftSpec::new(shape.branching(), 0.0)?;
    let mut y = Vec::with_capacity(shape.depth() + 1);
    for g in 0..=shape.depth() {
        let vals = x.generation(g);
        let (lo, hi) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mag = lo.abs().max(hi.abs());
        if hi - lo > SYMMETRY_TOL * mag {
            return Err(Error::SymmetryError { generation: g });
        }
        y.push(vals[0] / spec.scale(g));
    }
    ClassicState::new(y)
}

/// Largest node defect `|rhs_tree(lift y) − lift(rhs_classic y)|`.
///
/// `params` are the tree parameters; they must satisfy `α = β + α̃` and carry the
/// lifted forcing `2^{-α̃} f_classic`.
pub fn verify_lift_equivariance(y: &ClassicState, spec: &LiftSpec, params: &ModelParams) -> Result<f64> {
    if params.branching != spec.branching {
        return Err(Error::ParameterMismatch(format!(
            "tree branching {} but lift targets {}",
            params.branching, spec.branching
        )));
    }
    if (params.alpha - spec.alpha()).abs() > 1e-12 * params.alpha.abs().max(1.0) {
        return Err(Error::ParameterMismatch(format!(
            "tree alpha {} differs from beta + alpha_tilde = {}",
            params.alpha,
            spec.alpha()
        )));
    }
    let depth = params.depth;
    let classic = spec.classic_params(params);
    let yt = y.truncated(depth)?;
    let dy = rhs_classic(&yt, &classic)?;
    let x = lift_state(&yt, spec, depth)?;
    let dx = rhs_tree(&x, params)?;
    let shape = x.shape();
    let mut defect: f64 = 0.0;
    for g in 0..=depth {
        let target = dy[g] * spec.scale(g);
        for i in shape.generation_range(g) {
            defect = defect.max((dx[i] - target).abs());
        }
    }
    Ok(defect)
}
