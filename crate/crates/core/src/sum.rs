//! Pairwise (tree) summation.
//!
//! Every reduction in the crate goes through these helpers so the summation
//! order is a fixed function of the input length. Results do not depend on
//! how callers split work across threads.

const LEAF: usize = 32;

/// Pairwise sum of a slice.
pub fn sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return leaf_sum(xs);
    }
    let mid = xs.len() / 2;
    sum(&xs[..mid]) + sum(&xs[mid..])
}

/// Pairwise dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= LEAF {
        return leaf_dot(a, b);
    }
    let mid = a.len() / 2;
    dot(&a[..mid], &b[..mid]) + dot(&a[mid..], &b[mid..])
}

/// Pairwise sum of `f(i)` over `0..n`.
pub fn sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    sum_range(0, n, f)
}

fn sum_range(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
    if hi - lo <= LEAF {
        let mut acc = [0.0; 4];
        let mut i = lo;
        while i + 4 <= hi {
            acc[0] += f(i);
            acc[1] += f(i + 1);
            acc[2] += f(i + 2);
            acc[3] += f(i + 3);
            i += 4;
        }
        while i < hi {
            acc[0] += f(i);
            i += 1;
        }
        return (acc[0] + acc[1]) + (acc[2] + acc[3]);
    }
    let mid = lo + (hi - lo) / 2;
    sum_range(lo, mid, f) + sum_range(mid, hi, f)
}

#[inline]
fn leaf_sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = xs.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        acc[0] += c[0];
        acc[1] += c[1];
        acc[2] += c[2];
        acc[3] += c[3];
    }
    for &x in rest {
        acc[0] += x;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline]
fn leaf_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    for (x, y) in ra.iter().zip(rb) {
        acc[0] += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}
