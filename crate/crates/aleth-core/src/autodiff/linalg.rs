//! Dense row-major matrix kernels used by the tape.
//!
//! Parallel kernels split work into fixed 64-row chunks so the result is
//! bitwise identical regardless of the rayon thread count: every output
//! element is written by exactly one task, and cross-chunk reductions are
//! folded in chunk order.

use super::scalar::Scalar;
use rayon::prelude::*;

const CHUNK_ROWS: usize = 64;

/// c = a @ b with a: [m, k], b: [k, n].
pub fn mm_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![S::zero(); m * n];
    c.par_chunks_mut(n * CHUNK_ROWS)
        .zip(a.par_chunks(k * CHUNK_ROWS))
        .for_each(|(c_rows, a_rows)| {
            let rows = c_rows.len() / n;
            for i in 0..rows {
                let a_row = &a_rows[i * k..(i + 1) * k];
                let c_row = &mut c_rows[i * n..(i + 1) * n];
                for (kk, &av) in a_row.iter().enumerate() {
                    let b_row = &b[kk * n..(kk + 1) * n];
                    for j in 0..n {
                        c_row[j] = c_row[j] + av * b_row[j];
                    }
                }
            }
        });
    c
}

/// c = a @ b^T with a: [m, n], b: [k, n]; result [m, k].
pub fn mm_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![S::zero(); m * k];
    c.par_chunks_mut(k * CHUNK_ROWS)
        .zip(a.par_chunks(n * CHUNK_ROWS))
        .for_each(|(c_rows, a_rows)| {
            let rows = c_rows.len() / k;
            for i in 0..rows {
                let a_row = &a_rows[i * n..(i + 1) * n];
                let c_row = &mut c_rows[i * k..(i + 1) * k];
                for (kk, c_val) in c_row.iter_mut().enumerate() {
                    let b_row = &b[kk * n..(kk + 1) * n];
                    let mut acc = S::zero();
                    for j in 0..n {
                        acc = acc + a_row[j] * b_row[j];
                    }
                    *c_val = acc;
                }
            }
        });
    c
}

/// c = a^T @ b with a: [m, k], b: [m, n]; result [k, n].
///
/// Per-chunk partial results are reduced in chunk order.
pub fn mm_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let partials: Vec<Vec<S>> = a
        .par_chunks(k * CHUNK_ROWS)
        .zip(b.par_chunks(n * CHUNK_ROWS))
        .map(|(a_rows, b_rows)| {
            let rows = a_rows.len() / k;
            let mut local = vec![S::zero(); k * n];
            for i in 0..rows {
                let a_row = &a_rows[i * k..(i + 1) * k];
                let b_row = &b_rows[i * n..(i + 1) * n];
                for (kk, &av) in a_row.iter().enumerate() {
                    let dst = &mut local[kk * n..(kk + 1) * n];
                    for j in 0..n {
                        dst[j] = dst[j] + av * b_row[j];
                    }
                }
            }
            local
        })
        .collect();
    let mut c = vec![S::zero(); k * n];
    for part in partials {
        for (dst, src) in c.iter_mut().zip(part.iter()) {
            *dst = *dst + *src;
        }
    }
    let _ = m;
    c
}
