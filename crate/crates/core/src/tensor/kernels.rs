//! Raw loops behind the graph ops. Everything here is row-major and
//! single-threaded; summation order is fixed so results are bit-reproducible.

use crate::Scalar;

/// `c[m×n] += a[m×k] · b[k×n]`.
pub fn gemm_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    // four output rows share each streamed row of `b`
    while i + 4 <= m {
        let (c0, rest) = c[i * n..(i + 4) * n].split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let (x0, x1, x2, x3) = (a0[p], a1[p], a2[p], a3[p]);
            for ((((bv, r0), r1), r2), r3) in brow
                .iter()
                .zip(c0.iter_mut())
                .zip(c1.iter_mut())
                .zip(c2.iter_mut())
                .zip(c3.iter_mut())
            {
                *r0 = *r0 + x0 * *bv;
                *r1 = *r1 + x1 * *bv;
                *r2 = *r2 + x2 * *bv;
                *r3 = *r3 + x3 * *bv;
            }
        }
        i += 4;
    }
    while i < m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for p in 0..k {
            let x = arow[p];
            if x == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (r, bv) in crow.iter_mut().zip(brow) {
                *r = *r + x * *bv;
            }
        }
        i += 1;
    }
}

/// Transpose of a row-major `rows × cols` matrix.
pub fn transpose2d<T: Scalar>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    const BLK: usize = 32;
    for rb in (0..rows).step_by(BLK) {
        for cb in (0..cols).step_by(BLK) {
            for r in rb..(rb + BLK).min(rows) {
                for c in cb..(cb + BLK).min(cols) {
                    out[c * rows + r] = a[r * cols + c];
                }
            }
        }
    }
    out
}

/// Swap axes `d0` and `d1` of a tensor with the given shape.
pub fn swap_axes<T: Scalar>(shape: &[usize], d0: usize, d1: usize, a: &[T]) -> (Vec<usize>, Vec<T>) {
    let (lo, hi) = if d0 < d1 { (d0, d1) } else { (d1, d0) };
    let mut out_shape = shape.to_vec();
    out_shape.swap(lo, hi);
    if lo == hi {
        return (out_shape, a.to_vec());
    }
    // view as [outer, n_lo, mid, n_hi, inner]
    let outer: usize = shape[..lo].iter().product();
    let n_lo = shape[lo];
    let mid: usize = shape[lo + 1..hi].iter().product();
    let n_hi = shape[hi];
    let inner: usize = shape[hi + 1..].iter().product();
    let mut out = Vec::with_capacity(a.len());
    for o in 0..outer {
        for h in 0..n_hi {
            for m in 0..mid {
                for l in 0..n_lo {
                    let src = (((o * n_lo + l) * mid + m) * n_hi + h) * inner;
                    out.extend_from_slice(&a[src..src + inner]);
                }
            }
        }
    }
    (out_shape, out)
}
