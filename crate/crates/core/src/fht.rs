//! Fast Hadamard transform and maximum-likelihood decoding of first-order
//! Reed-Muller codes.

use std::ops::{Add, Sub};

use serde::Serialize;

use crate::error::{domain, Result};
use crate::llr::{Llr, LlrVector};

/// In-place Walsh-Hadamard transform, `W(k) = Σ_z (−1)^{⟨k,z⟩} v(z)`.
pub fn fht<T>(v: &mut [T]) -> Result<()>
where
    T: Copy + Add<Output = T> + Sub<Output = T>,
{
    if !v.len().is_power_of_two() {
        return domain(format!("fht length {} is not a power of two", v.len()));
    }
    butterflies(v);
    Ok(())
}

#[inline]
fn butterflies<T: Copy + Add<Output = T> + Sub<Output = T>>(v: &mut [T]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Result of decoding a first-order codeword.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FhtResult {
    pub codeword: Vec<u8>,
    pub best_index: usize,
    pub complemented: bool,
    pub metric: f64,
}

/// ML decoding of RM(m′, 1): the affine function `⟨k, z⟩ ⊕ s` with the largest
/// correlation. Ties go to the smallest `k`, then to `s = 0`.
pub fn first_order_decode(llr: &LlrVector) -> Result<FhtResult> {
    let n = llr.len();
    if !n.is_power_of_two() {
        return domain(format!("first-order length {n} is not a power of two"));
    }
    let mut codeword = vec![0u8; n];
    let (k, comp, metric) = match llr {
        LlrVector::Real(v) => {
            let mut scratch = Vec::new();
            let (k, c, w) = decode_into(v, &mut scratch, &mut codeword);
            (k, c, w.abs())
        }
        LlrVector::Fixed { raw, .. } => {
            let mut scratch = Vec::new();
            let (k, c, w) = decode_into(raw, &mut scratch, &mut codeword);
            (k, c, w.abs() as f64)
        }
    };
    Ok(FhtResult { codeword, best_index: k, complemented: comp, metric })
}

/// Decodes `llr` into `out` (bits), using `scratch` for the transform.
/// Returns `(k*, complemented, W(k*))`. `llr.len()` must be a power of two.
#[inline]
pub(crate) fn decode_into<T: Llr>(llr: &[T], scratch: &mut Vec<T::Acc>, out: &mut [u8]) -> (usize, bool, T::Acc) {
    scratch.clear();
    scratch.extend(llr.iter().map(|x| x.widen()));
    butterflies(scratch);
    let mut best = 0usize;
    let mut best_abs = T::acc_abs(scratch[0]);
    for (k, &w) in scratch.iter().enumerate().skip(1) {
        let a = T::acc_abs(w);
        if a > best_abs {
            best = k;
            best_abs = a;
        }
    }
    let w = scratch[best];
    let comp = T::acc_is_negative(w);
    // parity of best & z, built up from z with its lowest set bit cleared
    if let Some(first) = out.first_mut() {
        *first = comp as u8;
    }
    for z in 1..out.len() {
        let low = z & z.wrapping_neg();
        out[z] = out[z & (z - 1)] ^ (best & low != 0) as u8;
    }
    (best, comp, w)
}
