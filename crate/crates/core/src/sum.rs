//! Deterministic pairwise reductions.
//!
//! The split points depend only on the length of the input, so results are
//! bit-identical for any number of rayon workers.

use std::ops::Range;

const LEAF: usize = 256;
const PAR_MIN: usize = 1 << 15;

/// Pairwise sum of `term(i)` for `i` in `range`.
pub fn pairwise_sum_by<F>(range: Range<usize>, term: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = range.end.saturating_sub(range.start);
    if len <= LEAF {
        let mut acc = [0.0; 4];
        let mut i = range.start;
        while i + 4 <= range.end {
            for (l, a) in acc.iter_mut().enumerate() {
                *a += term(i + l);
            }
            i += 4;
        }
        for j in i..range.end {
            acc[0] += term(j);
        }
        return (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }
    let mid = range.start + len / 2;
    let (a, b) = if len >= PAR_MIN {
        rayon::join(
            || pairwise_sum_by(range.start..mid, term),
            || pairwise_sum_by(mid..range.end, term),
        )
    } else {
        (
            pairwise_sum_by(range.start..mid, term),
            pairwise_sum_by(mid..range.end, term),
        )
    };
    a + b
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(0..xs.len(), &|i| xs[i])
}

pub fn sum_of_squares(xs: &[f64]) -> f64 {
    pairwise_sum_by(0..xs.len(), &|i| xs[i] * xs[i])
}

/// Elementwise update `out[i] = op(i)` split into fixed chunks.
pub(crate) fn fill_by<F>(out: &mut [f64], op: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    use rayon::prelude::*;
    if out.len() < PAR_MIN {
        for (i, o) in out.iter_mut().enumerate() {
            *o = op(i);
        }
        return;
    }
    out.par_chunks_mut(PAR_MIN / 4)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * (PAR_MIN / 4);
            for (k, o) in chunk.iter_mut().enumerate() {
                *o = op(base + k);
            }
        });
}
