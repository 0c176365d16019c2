//! Frequency positional encoding of points and directions.

use crate::autodiff::Scalar;
use rayon::prelude::*;

/// Encoded feature width for a `dim`-component input at `levels` octaves.
pub fn encoded_dim(dim: usize, levels: usize) -> usize {
    dim * (1 + 2 * levels)
}

/// gamma(p) = (p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p),
/// cos(2^{L-1} pi p)) applied componentwise; the raw input leads the
/// feature vector.
pub fn positional_encoding<S: Scalar>(input: &[S], levels: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(encoded_dim(input.len(), levels));
    out.extend_from_slice(input);
    let pi = S::from_f64(std::f64::consts::PI);
    let two = S::from_f64(2.0);
    for level in 0..levels {
        let freq = pi * two.powi(level as i32);
        for &x in input {
            out.push((freq * x).sin());
        }
        for &x in input {
            out.push((freq * x).cos());
        }
    }
    out
}

/// Encode a batch of `dim`-component rows into a row-major
/// [points, encoded_dim] buffer.
pub fn encode_batch<S: Scalar>(flat: &[S], dim: usize, levels: usize) -> Vec<S> {
    assert_eq!(flat.len() % dim, 0, "input not divisible by component count");
    let width = encoded_dim(dim, levels);
    let points = flat.len() / dim;
    let mut out = vec![S::zero(); points * width];
    out.par_chunks_mut(width * 512)
        .zip(flat.par_chunks(dim * 512))
        .for_each(|(dst, src)| {
            for (row_out, row_in) in dst.chunks_exact_mut(width).zip(src.chunks_exact(dim)) {
                let enc = positional_encoding(row_in, levels);
                row_out.copy_from_slice(&enc);
            }
        });
    out
}
