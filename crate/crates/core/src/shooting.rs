//! Nested-interval shooting for second-order positive recurrences in double-double.
//!
//! A recurrence produces `v[n+1]` from `v[n-1]` and `v[n]`. Fixing `v[k-1]` and
//! shooting on `v[k]`, a wrong guess makes the sequence depart from the positive
//! solution at some index `m`, either upward or downward. The values at indices of
//! the same parity as `k` move with the guess and the others against it, so an
//! upward departure at even offset `m - k` (or a downward one at odd offset) means
//! the guess was too large.
//!
//! Finite precision limits how far one shot is meaningful, so the solver fixes the
//! resolved prefix and re-anchors further down the sequence.

use twofloat::TwoFloat;

use crate::error::{Error, Result};

pub(crate) type Dd = TwoFloat;

/// Relative agreement required between the two bracket ends for an index to count
/// as resolved.
pub(crate) const RESOLVE_TOL: f64 = 1e-22;

/// Relative bracket width at which double-double bisection is exhausted.
pub(crate) const DD_WIDTH: f64 = 1e-31;

const MAX_BRACKET_STEPS: usize = 2100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Verdict {
    TooSmall,
    TooLarge,
    Survived,
}

pub(crate) trait Recurrence {
    /// `v[n+1]` from `v[n-1]` and `v[n]`.
    fn step(&self, n: usize, prev: Dd, cur: Dd) -> Dd;

    /// Whether `next = v[m]` departs from the positive solution, given `cur = v[m-1]`.
    /// The returned index is where the departure is attributed.
    fn departure(&self, m: usize, cur: Dd, next: Dd) -> Option<(usize, Direction)>;

    /// First index checked for departures when shooting at `anchor` with `prev = v[anchor-1]`.
    fn first_checked(&self, anchor: usize, prev: Dd) -> usize {
        let _ = prev;
        anchor + 1
    }
}

pub(crate) fn dd_valid(x: Dd) -> bool {
    x.hi().is_finite() && x.lo().is_finite()
}

pub(crate) fn to_f64(x: Dd) -> f64 {
    x.hi() + x.lo()
}

/// `log2` of a positive double-double, accurate to double precision.
pub(crate) fn dd_log2(x: Dd) -> f64 {
    x.hi().log2() + (x.lo() / x.hi()) * std::f64::consts::LOG2_E
}

/// `2^{x n}` in double-double, exact when `x n` is an exactly representable integer.
pub(crate) fn dd_pow2(x: f64, n: usize) -> Dd {
    let e = x * n as f64;
    let prod = TwoFloat::new_mul(x, n as f64);
    if e.fract() == 0.0 && prod.lo() == 0.0 {
        return Dd::from(crate::params::pow2(e));
    }
    prod.exp2()
}

/// Sequence from a single shot: `values[i]` is `v[anchor + i]`.
#[derive(Debug, Clone)]
pub(crate) struct Shot {
    pub values: Vec<Dd>,
    pub departure: Option<(usize, Direction)>,
}

pub(crate) fn shoot<R: Recurrence>(rec: &R, anchor: usize, prev: Dd, guess: Dd, horizon: usize) -> Shot {
    let first = rec.first_checked(anchor, prev);
    let mut values = vec![guess];
    let mut before = prev;
    let mut cur = guess;
    for n in anchor..horizon {
        let next = rec.step(n, before, cur);
        let m = n + 1;
        if m >= first || !dd_valid(next) {
            if let Some(dep) = rec.departure(m, cur, next) {
                return Shot {
                    values,
                    departure: Some(dep),
                };
            }
        }
        values.push(next);
        before = cur;
        cur = next;
    }
    Shot {
        values,
        departure: None,
    }
}

pub(crate) fn verdict(anchor: usize, departure: Option<(usize, Direction)>) -> Verdict {
    match departure {
        None => Verdict::Survived,
        Some((m, dir)) => {
            let odd = m.saturating_sub(anchor) % 2 == 1;
            if (dir == Direction::Up) != odd {
                Verdict::TooLarge
            } else {
                Verdict::TooSmall
            }
        }
    }
}

/// Result of bisecting one anchor.
#[derive(Debug, Clone)]
pub(crate) struct AnchorSolution {
    pub lo: Dd,
    pub hi: Dd,
    pub mid: Shot,
    pub lo_shot: Shot,
    pub hi_shot: Shot,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BisectOptions {
    pub horizon: usize,
    pub max_iterations: usize,
    /// Relative width the caller requires at the first anchor.
    pub tol: f64,
}

fn probe<R: Recurrence>(rec: &R, k: usize, prev: Dd, a: Dd, horizon: usize) -> (Verdict, Shot) {
    let s = shoot(rec, k, prev, a, horizon);
    (verdict(k, s.departure), s)
}

/// Geometric bracket search around `guess`, then bisection to double-double exhaustion.
pub(crate) fn bisect_anchor<R: Recurrence>(
    rec: &R,
    k: usize,
    prev: Dd,
    guess: Dd,
    bracket: Option<(Dd, Dd)>,
    opts: BisectOptions,
) -> Result<AnchorSolution> {
    let horizon = opts.horizon;
    let (mut lo, mut hi, mut lo_shot, mut hi_shot) = match bracket {
        Some((lo, hi)) => {
            let (vl, sl) = probe(rec, k, prev, lo, horizon);
            let (vh, sh) = probe(rec, k, prev, hi, horizon);
            if vl != Verdict::TooSmall || vh != Verdict::TooLarge {
                return Err(Error::BracketFailure(format!(
                    "initial bracket [{:e}, {:e}] classified as {:?} / {:?}",
                    to_f64(lo),
                    to_f64(hi),
                    vl,
                    vh
                )));
            }
            (lo, hi, sl, sh)
        }
        None => search_bracket(rec, k, prev, guess, horizon)?,
    };

    // Outer probes must agree with the monotone ordering.
    let (outer_lo, _) = probe(rec, k, prev, lo * 0.5, horizon);
    let (outer_hi, _) = probe(rec, k, prev, hi * 2.0, horizon);
    if outer_lo == Verdict::TooLarge || outer_hi == Verdict::TooSmall {
        return Err(Error::BracketFailure(format!(
            "parity rule violated around [{:e}, {:e}] at anchor {k}",
            to_f64(lo),
            to_f64(hi)
        )));
    }

    let mut iterations = 0;
    loop {
        let mid = (lo + hi) * 0.5;
        let width = to_f64(hi - lo) / to_f64(mid).abs();
        if width <= DD_WIDTH || mid <= lo || mid >= hi {
            let mid_shot = shoot(rec, k, prev, mid, horizon);
            return Ok(AnchorSolution {
                lo,
                hi,
                mid: mid_shot,
                lo_shot,
                hi_shot,
                iterations,
            });
        }
        if iterations >= opts.max_iterations {
            if width <= opts.tol {
                let mid_shot = shoot(rec, k, prev, mid, horizon);
                return Ok(AnchorSolution {
                    lo,
                    hi,
                    mid: mid_shot,
                    lo_shot,
                    hi_shot,
                    iterations,
                });
            }
            return Err(Error::NoConvergence { iterations, width });
        }
        iterations += 1;
        let (v, s) = probe(rec, k, prev, mid, horizon);
        match v {
            Verdict::TooSmall => {
                lo = mid;
                lo_shot = s;
            }
            Verdict::TooLarge => {
                hi = mid;
                hi_shot = s;
            }
            Verdict::Survived => return Ok(survived(rec, k, prev, mid, s, iterations)),
        }
    }
}

/// A guess that survives the whole horizon; neighbours one bracket width away stand
/// in for the bracket shots so the resolved prefix is not overstated.
fn survived<R: Recurrence>(rec: &R, k: usize, prev: Dd, mid: Dd, shot: Shot, iterations: usize) -> AnchorSolution {
    let horizon = shot.values.len() + k;
    let lo = mid * (1.0 - DD_WIDTH);
    let hi = mid * (1.0 + DD_WIDTH);
    AnchorSolution {
        lo,
        hi,
        lo_shot: shoot(rec, k, prev, lo, horizon),
        hi_shot: shoot(rec, k, prev, hi, horizon),
        mid: shot,
        iterations,
    }
}

fn search_bracket<R: Recurrence>(
    rec: &R,
    k: usize,
    prev: Dd,
    guess: Dd,
    horizon: usize,
) -> Result<(Dd, Dd, Shot, Shot)> {
    let (v0, s0) = probe(rec, k, prev, guess, horizon);
    match v0 {
        Verdict::TooLarge => {
            let mut hi = guess;
            let mut hi_shot = s0;
            for _ in 0..MAX_BRACKET_STEPS {
                let lo = hi * 0.5;
                let (v, s) = probe(rec, k, prev, lo, horizon);
                match v {
                    Verdict::TooLarge => {
                        hi = lo;
                        hi_shot = s;
                    }
                    _ => return Ok((lo, hi, s, hi_shot)),
                }
            }
        }
        Verdict::TooSmall => {
            let mut lo = guess;
            let mut lo_shot = s0;
            for _ in 0..MAX_BRACKET_STEPS {
                let hi = lo * 2.0;
                let (v, s) = probe(rec, k, prev, hi, horizon);
                match v {
                    Verdict::TooSmall => {
                        lo = hi;
                        lo_shot = s;
                    }
                    _ => return Ok((lo, hi, lo_shot, s)),
                }
            }
        }
        Verdict::Survived => {
            let lo = guess * (1.0 - DD_WIDTH);
            let hi = guess * (1.0 + DD_WIDTH);
            let sl = shoot(rec, k, prev, lo, horizon);
            let sh = shoot(rec, k, prev, hi, horizon);
            return Ok((lo, hi, sl, sh));
        }
    }
    Err(Error::BracketFailure(format!(
        "no sign change found from guess {:e} at anchor {k}",
        to_f64(guess)
    )))
}

/// Largest index (absolute) up to which the two bracket shots agree to [`RESOLVE_TOL`].
pub(crate) fn resolved_until(k: usize, sol: &AnchorSolution) -> usize {
    let a = &sol.lo_shot.values;
    let b = &sol.hi_shot.values;
    let c = &sol.mid.values;
    let mut last = k;
    for i in 0..a.len().min(b.len()).min(c.len()) {
        let (x, y, m) = (a[i], b[i], c[i]);
        if !(dd_valid(x) && dd_valid(y) && m > 0.0) {
            break;
        }
        if to_f64((x - y).abs()) > RESOLVE_TOL * to_f64(m) {
            break;
        }
        last = k + i;
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_parity() {
        assert_eq!(verdict(0, Some((1, Direction::Down))), Verdict::TooLarge);
        assert_eq!(verdict(0, Some((2, Direction::Down))), Verdict::TooSmall);
        assert_eq!(verdict(0, Some((2, Direction::Up))), Verdict::TooLarge);
        assert_eq!(verdict(3, Some((4, Direction::Up))), Verdict::TooSmall);
        assert_eq!(verdict(3, None), Verdict::Survived);
    }

    #[test]
    fn log2_of_double_double() {
        let x = Dd::from(3.0) / 7.0;
        assert!((dd_log2(x) - (3.0f64 / 7.0).log2()).abs() < 1e-15);
        assert_eq!(dd_log2(Dd::from(1.0)), 0.0);
    }
}
