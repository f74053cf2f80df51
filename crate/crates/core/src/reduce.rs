//! Deterministic reductions.
//!
//! Partial sums are always combined with a fixed-shape pairwise tree over the
//! block index, so the result depends only on how the data were blocked,
//! never on which thread produced a block.

use crate::real::Real;

/// Pairwise (tree) sum of a slice in index order.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Element-wise pairwise tree reduction of equally sized partial vectors.
///
/// `parts[i][k]` is block `i`'s contribution at index `k`. Returns the
/// element-wise sum combined as `((p0 + p1) + (p2 + p3)) + ...`.
pub fn pairwise_sum_vecs<T: Real>(mut parts: Vec<Vec<T>>) -> Vec<T> {
    if parts.is_empty() {
        return Vec::new();
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                for (x, y) in a.iter_mut().zip(b.iter()) {
                    *x += *y;
                }
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}
