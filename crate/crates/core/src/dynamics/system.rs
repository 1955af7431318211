use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::sum::pairwise_sum_by;
use crate::tree::TreeShape;

/// Boundary condition beyond the deepest stored generation.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Closure {
    /// Intensities beyond the truncation depth are zero.
    #[default]
    Galerkin,
    /// Generation `depth + 1` is prescribed as `values[k] / (t - t0)`, one value per
    /// node of that generation in heap order. Used to follow self-similar solutions
    /// on a finite tree.
    SelfSimilarTail { t0: f64, values: Vec<f64> },
    /// Generation `depth + 1` is held at `values`, in heap order. Keeps stationary
    /// profiles stationary on a finite tree.
    Fixed { values: Vec<f64> },
}

/// A truncated tree (or classic chain, branching 1) together with its closure.
///
/// The classic model is the tree model with one child per node and `alpha = beta`,
/// so both share a single kernel.
#[derive(Debug, Clone)]
pub struct CascadeSystem {
    params: ModelParams,
    shape: TreeShape,
    closure: Closure,
    rate_len: usize,
}

impl CascadeSystem {
    pub fn new(params: ModelParams, closure: Closure) -> Result<Self> {
        params.validate(crate::params::BranchingMode::Permissive)?;
        let shape = TreeShape::new(params.branching, params.depth)?;
        let tail = match &closure {
            Closure::Galerkin => None,
            Closure::SelfSimilarTail { t0, values } => {
                if !t0.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "t0",
                        reason: "must be finite".into(),
                    });
                }
                Some(values)
            }
            Closure::Fixed { values } => Some(values),
        };
        if let Some(values) = tail {
            let need = shape.generation_size(params.depth + 1);
            if values.len() != need {
                return Err(Error::LengthMismatch {
                    expected: need,
                    actual: values.len(),
                });
            }
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { index });
            }
        }
        let rate_len = 1 + 2 * (params.depth + 1);
        Ok(Self {
            params,
            shape,
            closure,
            rate_len,
        })
    }

    pub fn galerkin(params: ModelParams) -> Result<Self> {
        Self::new(params, Closure::Galerkin)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn closure(&self) -> &Closure {
        &self.closure
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    /// Length of the work-rate vector: `[X_0, visc_0..=visc_D, flux_0..=flux_D]`.
    pub(crate) fn rate_len(&self) -> usize {
        self.rate_len
    }

    /// Children of generation `g` as one contiguous slice in heap order, with the
    /// factor applied to their sums (`None` when the generation has no children).
    fn children_of<'a>(&'a self, x: &'a [f64], g: usize, t: f64) -> Option<(&'a [f64], f64)> {
        if g < self.params.depth {
            return Some((&x[self.shape.generation_range(g + 1)], 1.0));
        }
        match &self.closure {
            Closure::Galerkin => None,
            Closure::SelfSimilarTail { t0, values } => Some((values.as_slice(), 1.0 / (t - t0))),
            Closure::Fixed { values } => Some((values.as_slice(), 1.0)),
        }
    }

    /// Time derivative of `x` at time `t`.
    pub fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        self.eval::<false>(t, x, dx, &mut []);
    }

    /// Instantaneous work rates: input `X_0`, per-generation `Σ d_j X_j²`, and
    /// per-generation flux `2 c_{n+1} Σ_{|k|=n+1} X_{parent(k)}² X_k` (the last entry
    /// is the flux through the truncation boundary, zero under Galerkin closure).
    pub fn work_rates(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut dx = vec![0.0; x.len()];
        self.rhs_and_rates(t, x, &mut dx, out);
    }

    /// [`rhs`](Self::rhs) and [`work_rates`](Self::work_rates) in one pass.
    pub fn rhs_and_rates(&self, t: f64, x: &[f64], dx: &mut [f64], rates: &mut [f64]) {
        debug_assert_eq!(rates.len(), self.rate_len);
        self.eval::<true>(t, x, dx, rates);
    }

    fn eval<const R: bool>(&self, t: f64, x: &[f64], dx: &mut [f64], rates: &mut [f64]) {
        debug_assert_eq!(x.len(), self.len());
        let p = &self.params;
        let depth = p.depth;
        let n = self.shape.branching();
        let forcing = [p.f];
        if R {
            rates[0] = x[0];
        }
        for g in 0..=depth {
            let r = self.shape.generation_range(g);
            let coef = GenCoef {
                cg: p.c(g),
                cn: p.c(g + 1),
                nud: p.nu * p.d(g),
            };
            let parents: &[f64] = if g == 0 {
                &forcing
            } else {
                &x[self.shape.generation_range(g - 1)]
            };
            let xs = &x[r.clone()];
            let kids = self.children_of(x, g, t);
            let out = &mut dx[r];
            let (sq, flux) = if out.len() >= PAR_MIN {
                use rayon::prelude::*;
                let block = n * (BLOCK / n).max(1);
                let parts: Vec<(f64, f64)> = out
                    .par_chunks_mut(block)
                    .enumerate()
                    .map(|(b, o)| gen_kernel_any::<R>(o, b * block, xs, parents, kids, n, coef))
                    .collect();
                parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
            } else {
                gen_kernel_any::<R>(out, 0, xs, parents, kids, n, coef)
            };
            if R {
                rates[1 + g] = p.d(g) * sq;
                rates[2 + depth + g] = if kids.is_some() { 2.0 * p.c(g + 1) * flux } else { 0.0 };
            }
        }
    }

    /// Per-generation energies `Σ_{|j|=g} X_j²`.
    pub fn generation_energies(&self, x: &[f64]) -> Vec<f64> {
        (0..=self.params.depth)
            .map(|g| pairwise_sum_by(self.shape.generation_range(g), &|i| x[i] * x[i]))
            .collect()
    }

    /// Boundary fluxes `2 Σ_{|k|=n+1} c_k X_{parent(k)}² X_k` for `n = 0..=depth`.
    pub fn boundary_fluxes(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut rates = vec![0.0; self.rate_len];
        self.work_rates(t, x, &mut rates);
        rates[2 + self.params.depth..].to_vec()
    }

    pub fn total_energy(&self, x: &[f64]) -> f64 {
        pairwise_sum_by(0..x.len(), &|i| x[i] * x[i])
    }
}

const PAR_MIN: usize = 1 << 15;
const BLOCK: usize = 1 << 13;

#[derive(Clone, Copy)]
struct GenCoef {
    cg: f64,
    cn: f64,
    nud: f64,
}

#[inline(always)]
fn child_sum<const N: usize>(c: &[f64]) -> f64 {
    let mut s = c[0];
    for v in &c[1..N] {
        s += v;
    }
    s
}

#[inline(always)]
fn child_sum_dyn(c: &[f64]) -> f64 {
    let mut s = c[0];
    for v in &c[1..] {
        s += v;
    }
    s
}

/// Sums of `X_j²` and `X_j² · (children sum)` in four interleaved lanes.
#[derive(Clone, Copy, Default)]
struct Lanes {
    sq: [f64; 4],
    flux: [f64; 4],
}

impl Lanes {
    #[inline(always)]
    fn add(&mut self, lane: usize, xi: f64, s: f64) {
        let q = xi * xi;
        self.sq[lane] += q;
        self.flux[lane] += q * s;
    }

    fn total(&self) -> (f64, f64) {
        let t = |a: &[f64; 4]| (a[0] + a[1]) + (a[2] + a[3]);
        (t(&self.sq), t(&self.flux))
    }
}

/// Derivatives of one block of a generation starting at local index `lo`, and
/// with `R` its square and flux sums. `N` is the branching factor, or 0 for a
/// branching known only at run time.
#[inline(always)]
fn gen_kernel<const N: usize, const R: bool>(
    out: &mut [f64],
    lo: usize,
    xs: &[f64],
    parents: &[f64],
    kids: Option<(&[f64], f64)>,
    n: usize,
    k: GenCoef,
) -> (f64, f64) {
    let len = out.len();
    if N > 0 && lo % N == 0 && len % N == 0 {
        return gen_kernel_grouped::<N, R>(out, lo, xs, parents, kids, k);
    }
    let mut lanes = Lanes::default();
    let xs = &xs[lo..lo + len];
    let node = |o: &mut f64, i: usize, xi: f64, s: f64| {
        let par = parents[(lo + i) / if N == 0 { n } else { N }];
        *o = (-k.nud * xi + k.cg * par * par) - k.cn * xi * s;
    };
    match kids {
        Some((ch, scale)) => {
            let ch = &ch[lo * n..(lo + len) * n];
            for (i, ((o, &xi), c)) in out.iter_mut().zip(xs).zip(ch.chunks_exact(n)).enumerate() {
                let s = if N == 0 { child_sum_dyn(c) } else { child_sum::<N>(c) } * scale;
                node(o, i, xi, s);
                if R {
                    lanes.add(i % 4, xi, s);
                }
            }
        }
        None => {
            for (i, (o, &xi)) in out.iter_mut().zip(xs).enumerate() {
                node(o, i, xi, 0.0);
                if R {
                    lanes.add(i % 4, xi, 0.0);
                }
            }
        }
    }
    lanes.total()
}

/// `gen_kernel` walking siblings in groups of `N` under a shared parent.
#[inline(always)]
fn gen_kernel_grouped<const N: usize, const R: bool>(
    out: &mut [f64],
    lo: usize,
    xs: &[f64],
    parents: &[f64],
    kids: Option<(&[f64], f64)>,
    k: GenCoef,
) -> (f64, f64) {
    let mut lanes = Lanes::default();
    let len = out.len();
    let xs = &xs[lo..lo + len];
    let parents = &parents[lo / N..(lo + len) / N];
    let groups = out.chunks_exact_mut(N).zip(xs.chunks_exact(N)).zip(parents);
    match kids {
        Some((ch, scale)) => {
            let ch = &ch[lo * N..(lo + len) * N];
            for (((o, x), &par), c) in groups.zip(ch.chunks_exact(N * N)) {
                let gain = k.cg * par * par;
                for j in 0..N {
                    let s = child_sum::<N>(&c[j * N..j * N + N]) * scale;
                    o[j] = (-k.nud * x[j] + gain) - k.cn * x[j] * s;
                    if R {
                        lanes.add(j % 4, x[j], s);
                    }
                }
            }
        }
        None => {
            for ((o, x), &par) in groups {
                let gain = k.cg * par * par;
                for j in 0..N {
                    o[j] = (-k.nud * x[j] + gain) - k.cn * x[j] * 0.0;
                    if R {
                        lanes.add(j % 4, x[j], 0.0);
                    }
                }
            }
        }
    }
    lanes.total()
}

fn gen_kernel_any<const R: bool>(
    out: &mut [f64],
    lo: usize,
    xs: &[f64],
    parents: &[f64],
    kids: Option<(&[f64], f64)>,
    n: usize,
    k: GenCoef,
) -> (f64, f64) {
    match n {
        1 => gen_kernel::<1, R>(out, lo, xs, parents, kids, n, k),
        2 => gen_kernel::<2, R>(out, lo, xs, parents, kids, n, k),
        4 => gen_kernel::<4, R>(out, lo, xs, parents, kids, n, k),
        8 => gen_kernel::<8, R>(out, lo, xs, parents, kids, n, k),
        _ => gen_kernel::<0, R>(out, lo, xs, parents, kids, n, k),
    }
}
