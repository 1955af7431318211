//! Self-similar solutions `X_j(t) = a_j / (t − t0)` of the unforced inviscid model.
//!
//! Substituting `Y_n = b_n / (t − t0)` into the classic model gives
//!
//! ```text
//! b_{n+1} = (b_n + 2^{βn} b_{n-1}²) / (2^{β(n+1)} b_n),   b_{n0-1} = 0,
//! ```
//!
//! which does not involve `t0`. The positive square-summable solution is found by
//! shooting on `b_{n0}` in the rescaled variables `B_n = 2^{βn/3} b_n`, where it
//! tends to a constant:
//!
//! ```text
//! B_{n+1} = B_{n-1}² / B_n + 2^{-2β(n+1)/3}.
//! ```
//!
//! Wrong guesses leave the constant regime geometrically; a ratio `B_m / B_{m-1}`
//! above 4 or below 1/4 counts as a departure.
//!
//! Tree solutions are lifts `a_j = 2^{-(|j|+2)α̃} b_{|j|}`, optionally grafted onto
//! disjoint subtrees that share the pole `t0`.

use crate::dynamics::Closure;
use crate::error::{Error, Result};
use crate::lift::LiftSpec;
use crate::params::{pow2, ModelParams};
use crate::shooting::{bisect_anchor, dd_pow2, dd_valid, resolved_until, to_f64, BisectOptions, Dd, Direction, Recurrence};
use crate::state::{ClassicState, TreeState};
use crate::stationary::branching_of;
use crate::tree::{NodeId, TreeShape};

/// Ratio of consecutive rescaled coefficients beyond which a shot has departed.
pub const DEPARTURE_RATIO: f64 = 4.0;

const EXTRA_HORIZON: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarOptions {
    pub n_max: usize,
    /// First nonzero generation; `b_{n0-1} = 0`.
    pub n0: usize,
    /// Required relative width of the final bracket for `b_{n0}`.
    pub tol: f64,
    pub max_iterations: usize,
    pub initial_guess: Option<f64>,
    pub initial_bracket: Option<(f64, f64)>,
}

impl Default for SelfSimilarOptions {
    fn default() -> Self {
        Self {
            n_max: 25,
            n0: 0,
            tol: 1e-12,
            max_iterations: 500,
            initial_guess: None,
            initial_bracket: None,
        }
    }
}

/// Coefficients of a self-similar solution, kept in formula form.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarProfile {
    /// Pole time, negative.
    pub t0: f64,
    pub beta: f64,
    /// First nonzero generation.
    pub n0: usize,
    /// `b_0..=b_{n_max}`, zero below `n0`.
    pub b: Vec<f64>,
    /// Rescaled `B_n = 2^{βn/3} b_n`.
    pub w: Vec<f64>,
    /// Present once lifted: `a_j = 2^{-(|j|+2)α̃} b_{|j|}`.
    pub lift: Option<LiftSpec>,
    /// Final bracket for `b_{n0}`.
    pub bracket: (f64, f64),
    /// Indices where the shooting was (re)started.
    pub anchors: Vec<usize>,
}

impl SelfSimilarProfile {
    pub fn n_max(&self) -> usize {
        self.b.len() - 1
    }

    pub fn b0(&self) -> f64 {
        self.b[self.n0]
    }

    pub fn branching(&self) -> usize {
        self.lift.map_or(1, |l| l.branching())
    }

    pub fn alpha_tilde(&self) -> f64 {
        self.lift.map_or(0.0, |l| l.alpha_tilde)
    }

    /// Tree exponent `α = β + α̃` (`β` for the classic profile).
    pub fn alpha(&self) -> f64 {
        self.beta + self.alpha_tilde()
    }

    fn check_generation(&self, g: usize) -> Result<()> {
        if g > self.n_max() {
            return Err(Error::DepthMismatch {
                required: g + 1,
                available: self.b.len(),
            });
        }
        Ok(())
    }

    /// Per-node coefficient of generation `g`: `a` when lifted, `b` otherwise.
    pub fn coefficient(&self, g: usize) -> Result<f64> {
        self.check_generation(g)?;
        Ok(match &self.lift {
            Some(l) => l.scale(g) * self.b[g],
            None => self.b[g],
        })
    }

    pub fn coefficients(&self, depth: usize) -> Result<Vec<f64>> {
        (0..=depth).map(|g| self.coefficient(g)).collect()
    }

    /// `Σ_{|j| ≤ depth} a_j²`, so that `E(t) = energy_coefficient / (t − t0)²`.
    pub fn energy_coefficient(&self, depth: usize) -> Result<f64> {
        let n = self.branching() as f64;
        let mut sum = 0.0;
        let mut count = 1.0;
        for g in 0..=depth {
            let a = self.coefficient(g)?;
            sum += count * a * a;
            count *= n;
        }
        Ok(sum)
    }

    fn time_factor(&self, t: f64) -> Result<f64> {
        if !(t > self.t0) {
            return Err(Error::DomainError(format!("t = {t} is not after the pole t0 = {}", self.t0)));
        }
        Ok(1.0 / (t - self.t0))
    }

    /// `Y_n(t) = b_n / (t − t0)` for `n = 0..=depth`.
    pub fn classic_state_at(&self, t: f64, depth: usize) -> Result<ClassicState> {
        let k = self.time_factor(t)?;
        self.check_generation(depth)?;
        ClassicState::new(self.b[..=depth].iter().map(|b| b * k).collect())
    }

    /// Lifted profile on the full tree of the given depth at time `t`.
    pub fn tree_state_at(&self, t: f64, depth: usize) -> Result<TreeState> {
        let k = self.time_factor(t)?;
        let per_gen: Vec<f64> = self.coefficients(depth)?.iter().map(|a| a * k).collect();
        TreeState::from_generations(TreeShape::new(self.branching(), depth)?, &per_gen)
    }

    /// Closure that prescribes generation `depth + 1` along the exact solution.
    pub fn tail_closure(&self, depth: usize) -> Result<Closure> {
        let a = self.coefficient(depth + 1)?;
        let n = TreeShape::new(self.branching(), depth + 1)?.generation_size(depth + 1);
        Ok(Closure::SelfSimilarTail {
            t0: self.t0,
            values: vec![a; n],
        })
    }

    /// Unforced inviscid parameters matching the profile. `gamma` is irrelevant
    /// without viscosity and set to 1.
    pub fn model_params(&self, depth: usize) -> Result<ModelParams> {
        ModelParams::tree(self.alpha(), 1.0, 0.0, 0.0, self.branching(), depth)
    }

    /// Largest relative residual of `a_g + c_g a_{g-1}² − N c_{g+1} a_g a_{g+1}` over
    /// generations `g < n_max`, each relative to its largest term.
    pub fn algebraic_residual(&self) -> f64 {
        let n = self.branching() as f64;
        let alpha = self.alpha();
        let a: Vec<f64> = (0..=self.n_max()).map(|g| self.coefficient(g).unwrap_or(0.0)).collect();
        let mut worst: f64 = 0.0;
        for g in 0..self.n_max() {
            let prev = if g == 0 { 0.0 } else { a[g - 1] };
            let t1 = a[g];
            let t2 = pow2(alpha * g as f64) * prev * prev;
            let t3 = n * pow2(alpha * (g + 1) as f64) * a[g] * a[g + 1];
            let scale = t1.abs().max(t2.abs()).max(t3.abs());
            if scale > 0.0 {
                worst = worst.max((t1 + t2 - t3).abs() / scale);
            }
        }
        worst
    }
}

/// Largest relative residual of `a_j + c_j a_parent² − Σ_k c_k a_j a_k` over the
/// nodes of `coeffs` above the last generation (the root's parent counts as zero).
pub fn tree_algebraic_residual(coeffs: &TreeState, alpha: f64) -> f64 {
    let shape = coeffs.shape();
    let x = coeffs.values();
    let mut worst: f64 = 0.0;
    for g in 0..shape.depth() {
        let cg = pow2(alpha * g as f64);
        let cn = pow2(alpha * (g + 1) as f64);
        for i in shape.generation_range(g) {
            let par = if i == 0 { 0.0 } else { x[(i - 1) / shape.branching()] };
            let kids: f64 = shape.children(NodeId(i)).map(|k| x[k]).sum();
            let t1 = x[i];
            let t2 = cg * par * par;
            let t3 = cn * x[i] * kids;
            let scale = t1.abs().max(t2.abs()).max(t3.abs());
            if scale > 0.0 {
                worst = worst.max((t1 + t2 - t3).abs() / scale);
            }
        }
    }
    worst
}

struct BRecurrence {
    /// `e[m] = 2^{-2βm/3}`.
    e: Vec<Dd>,
}

impl Recurrence for BRecurrence {
    fn step(&self, n: usize, prev: Dd, cur: Dd) -> Dd {
        prev * prev / cur + self.e[n + 1]
    }

    fn departure(&self, m: usize, cur: Dd, next: Dd) -> Option<(usize, Direction)> {
        if !dd_valid(next) || !dd_valid(cur) || cur <= 0.0 {
            return Some((m, Direction::Up));
        }
        let r = to_f64(next / cur);
        if !r.is_finite() || r > DEPARTURE_RATIO {
            Some((m, Direction::Up))
        } else if r < 1.0 / DEPARTURE_RATIO {
            Some((m, Direction::Down))
        } else {
            None
        }
    }

    /// With `B_{k-1} = 0` the next value does not depend on the guess.
    fn first_checked(&self, anchor: usize, prev: Dd) -> usize {
        if prev == 0.0 {
            anchor + 2
        } else {
            anchor + 1
        }
    }
}

pub fn solve_selfsimilar_classic(t0: f64, beta: f64, n_max: usize, tol: f64) -> Result<SelfSimilarProfile> {
    let opts = SelfSimilarOptions {
        n_max,
        tol,
        ..SelfSimilarOptions::default()
    };
    solve_selfsimilar_with(t0, beta, &opts)
}

pub fn solve_selfsimilar_with(t0: f64, beta: f64, opts: &SelfSimilarOptions) -> Result<SelfSimilarProfile> {
    if !(t0 < 0.0 && t0.is_finite()) {
        return Err(Error::DomainError(format!("pole time must be negative, got {t0}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::DomainError(format!("beta must be positive, got {beta}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::DomainError("tol must be positive".into()));
    }
    if opts.n0 > opts.n_max {
        return Err(Error::DomainError(format!("n0 = {} exceeds n_max = {}", opts.n0, opts.n_max)));
    }
    let (n0, n_max) = (opts.n0, opts.n_max);
    let rec = BRecurrence {
        e: (0..=n_max + EXTRA_HORIZON + 2).map(|m| dd_pow2(-2.0 * beta / 3.0, m)).collect(),
    };

    // w[n] = B_n
    let mut w: Vec<Dd> = vec![Dd::from(0.0); n0];
    let mut anchors = Vec::new();
    let mut bracket = (f64::NAN, f64::NAN);
    let mut k = n0;
    let mut prev = Dd::from(0.0);
    let mut guess = Dd::from(opts.initial_guess.unwrap_or(0.5));
    loop {
        let explicit = if k == n0 {
            opts.initial_bracket.map(|(a, b)| (Dd::from(a), Dd::from(b)))
        } else {
            None
        };
        let bopts = BisectOptions {
            horizon: k + EXTRA_HORIZON,
            max_iterations: opts.max_iterations,
            tol: if k == n0 { opts.tol } else { f64::INFINITY },
        };
        let sol = bisect_anchor(&rec, k, prev, guess, explicit, bopts)?;
        if k == n0 {
            bracket = (to_f64(sol.lo), to_f64(sol.hi));
            let width = (bracket.1 - bracket.0) / to_f64(sol.mid.values[0]);
            if width > opts.tol {
                return Err(Error::NoConvergence {
                    iterations: sol.iterations,
                    width,
                });
            }
        }
        anchors.push(k);
        let r = resolved_until(k, &sol).min(n_max);
        w.extend_from_slice(&sol.mid.values[..=r - k]);
        if r >= n_max {
            break;
        }
        let next = r + 1;
        prev = w[r];
        guess = match sol.mid.values.get(next - k) {
            Some(&v) if dd_valid(v) && v > 0.0 => v,
            _ => prev,
        };
        k = next;
    }

    let b: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(n, &v)| to_f64(v * dd_pow2(-beta / 3.0, n)))
        .collect();
    Ok(SelfSimilarProfile {
        t0,
        beta,
        n0,
        b,
        w: w.iter().map(|&v| to_f64(v)).collect(),
        lift: None,
        bracket,
        anchors,
    })
}

/// Lifts a classic profile to the tree with `N = 2^{2α̃}` and `α = β + α̃`.
pub fn lift_selfsimilar(profile: &SelfSimilarProfile, alpha_tilde: f64, depth: usize) -> Result<SelfSimilarProfile> {
    let branching = branching_of(alpha_tilde).map_err(|_| {
        Error::ParameterMismatch(format!("alpha_tilde = {alpha_tilde} does not match an integer branching factor"))
    })?;
    if let Some(l) = &profile.lift {
        if l.branching() != branching {
            return Err(Error::ParameterMismatch(format!(
                "profile already lifted to branching {}, requested {branching}",
                l.branching()
            )));
        }
    }
    profile.check_generation(depth)?;
    TreeShape::new(branching, depth)?;
    Ok(SelfSimilarProfile {
        lift: Some(LiftSpec::new(branching, profile.beta)?),
        ..profile.clone()
    })
}

fn check_branching(shape: &TreeShape, profile: &SelfSimilarProfile) -> Result<()> {
    if profile.branching() != shape.branching() {
        return Err(Error::ParameterMismatch(format!(
            "profile lifted to branching {} but the tree has branching {}",
            profile.branching(),
            shape.branching()
        )));
    }
    Ok(())
}

fn check_root_generation(shape: &TreeShape, profile: &SelfSimilarProfile, root: NodeId) -> Result<usize> {
    if root.0 >= shape.len() {
        return Err(Error::IndexOutOfRange {
            index: root.0,
            len: shape.len(),
        });
    }
    let g = shape.generation(root);
    if g > profile.n0 {
        return Err(Error::GenerationMismatch {
            profile: profile.n0,
            node: g,
        });
    }
    Ok(g)
}

/// Writes the profile coefficients onto the subtree of `root`; generations below
/// `n0` stay zero.
fn place(values: &mut [f64], shape: &TreeShape, profile: &SelfSimilarProfile, root: NodeId) -> Result<()> {
    let g0 = shape.generation(root);
    for (off, r) in shape.subtree_ranges(root).into_iter().enumerate() {
        let a = profile.coefficient(g0 + off)?;
        values[r].fill(a);
    }
    Ok(())
}

/// Places the profile coefficients on the subtree rooted at `subtree_root` of a
/// coefficient state that must vanish on that subtree and on its ancestors.
///
/// The subtree root may sit at or above the profile's first nonzero generation.
pub fn graft_selfsimilar(base: &TreeState, profile: &SelfSimilarProfile, subtree_root: NodeId) -> Result<TreeState> {
    let shape = base.shape();
    check_branching(shape, profile)?;
    check_root_generation(shape, profile, subtree_root)?;
    profile.check_generation(shape.depth())?;
    let x = base.values();
    let mut cur = subtree_root;
    loop {
        if x[cur.0] != 0.0 {
            return Err(Error::OverlapError { root: subtree_root.0 });
        }
        if cur == NodeId::ROOT {
            break;
        }
        cur = shape.parent(cur)?;
    }
    for r in shape.subtree_ranges(subtree_root) {
        if x[r].iter().any(|&v| v != 0.0) {
            return Err(Error::OverlapError { root: subtree_root.0 });
        }
    }
    let mut values = x.to_vec();
    place(&mut values, shape, profile, subtree_root)?;
    TreeState::new(shape.clone(), values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graft {
    pub root: NodeId,
    pub profile: SelfSimilarProfile,
}

/// Self-similar profiles grafted onto disjoint subtrees with a common pole.
#[derive(Debug, Clone, PartialEq)]
pub struct GraftedTree {
    shape: TreeShape,
    grafts: Vec<Graft>,
}

impl GraftedTree {
    pub fn new(shape: TreeShape) -> Self {
        Self {
            shape,
            grafts: Vec::new(),
        }
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn grafts(&self) -> &[Graft] {
        &self.grafts
    }

    pub fn t0(&self) -> Option<f64> {
        self.grafts.first().map(|g| g.profile.t0)
    }

    pub fn graft(&mut self, profile: &SelfSimilarProfile, root: NodeId) -> Result<()> {
        check_branching(&self.shape, profile)?;
        check_root_generation(&self.shape, profile, root)?;
        // The tail closure needs one generation beyond the stored depth.
        profile.check_generation(self.shape.depth() + 1)?;
        if let Some(first) = self.grafts.first() {
            if first.profile.t0 != profile.t0 {
                return Err(Error::PoleMismatch {
                    expected: first.profile.t0,
                    found: profile.t0,
                });
            }
            if first.profile.beta != profile.beta {
                return Err(Error::ParameterMismatch(format!(
                    "beta {} differs from {} of the first graft",
                    profile.beta, first.profile.beta
                )));
            }
        }
        for g in &self.grafts {
            if self.shape.is_in_subtree(root, g.root) || self.shape.is_in_subtree(g.root, root) {
                return Err(Error::OverlapError { root: root.0 });
            }
        }
        self.grafts.push(Graft {
            root,
            profile: profile.clone(),
        });
        Ok(())
    }

    /// Whether `node` lies in one of the grafted subtrees.
    pub fn covers(&self, node: NodeId) -> bool {
        self.grafts.iter().any(|g| self.shape.is_in_subtree(node, g.root))
    }

    /// Coefficients `a_j`, zero outside the grafted subtrees.
    pub fn coefficients(&self) -> Result<TreeState> {
        let mut values = vec![0.0; self.shape.len()];
        for g in &self.grafts {
            place(&mut values, &self.shape, &g.profile, g.root)?;
        }
        TreeState::new(self.shape.clone(), values)
    }

    pub fn state_at(&self, t: f64) -> Result<TreeState> {
        let Some(t0) = self.t0() else {
            return Ok(TreeState::zeros(self.shape.clone()));
        };
        if !(t > t0) {
            return Err(Error::DomainError(format!("t = {t} is not after the pole t0 = {t0}")));
        }
        let k = 1.0 / (t - t0);
        let mut x = self.coefficients()?;
        x.values_mut().iter_mut().for_each(|v| *v *= k);
        Ok(x)
    }

    /// Closure prescribing generation `depth + 1` along the grafted solution.
    pub fn tail_closure(&self) -> Result<Closure> {
        let depth = self.shape.depth();
        let n = self.shape.branching();
        let below = TreeShape::new(n, depth + 1)?;
        let offset = below.generation_range(depth + 1).start;
        let mut values = vec![0.0; below.generation_size(depth + 1)];
        for g in &self.grafts {
            let a = g.profile.coefficient(depth + 1)?;
            let r = below.subtree_ranges(g.root).pop().expect("subtree reaches the last generation");
            values[r.start - offset..r.end - offset].fill(a);
        }
        Ok(Closure::SelfSimilarTail {
            t0: self.t0().unwrap_or(-1.0),
            values,
        })
    }

    /// Unforced inviscid parameters for the grafted tree.
    pub fn model_params(&self) -> Result<ModelParams> {
        let alpha = match self.grafts.first() {
            Some(g) => g.profile.alpha(),
            None => {
                return Err(Error::DomainError("no profile grafted".into()));
            }
        };
        ModelParams::tree(alpha, 1.0, 0.0, 0.0, self.shape.branching(), self.shape.depth())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn departure_rule() {
        let rec = BRecurrence {
            e: vec![Dd::from(1.0); 4],
        };
        let one = Dd::from(1.0);
        assert_eq!(rec.departure(3, one, Dd::from(5.0)), Some((3, Direction::Up)));
        assert_eq!(rec.departure(3, one, Dd::from(0.2)), Some((3, Direction::Down)));
        assert_eq!(rec.departure(3, one, Dd::from(2.0)), None);
        assert_eq!(rec.departure(3, one, Dd::from(f64::INFINITY)), Some((3, Direction::Up)));
        assert_eq!(rec.first_checked(0, Dd::from(0.0)), 2);
        assert_eq!(rec.first_checked(5, one), 6);
    }
}
