//! LLR vectors in real or fixed-point arithmetic.
//!
//! Positive values favour bit 0. A zero value decides bit 0.

use std::fmt::Debug;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::fixed::QFormat;

/// Scalar LLR arithmetic shared by the decoders.
///
/// `Acc` is the wide type used by transforms and sums: `f64` for real LLRs,
/// `i64` for raw fixed-point values.
pub trait Llr: Copy + Debug + PartialEq + PartialOrd + Send + Sync + 'static {
    type Acc: Copy
        + Debug
        + Default
        + PartialOrd
        + Add<Output = Self::Acc>
        + Sub<Output = Self::Acc>
        + Neg<Output = Self::Acc>
        + Send
        + Sync;

    const ZERO: Self;

    fn abs(self) -> Self;
    fn negate(self) -> Self;
    fn is_negative(self) -> bool;
    fn widen(self) -> Self::Acc;
    fn acc_abs(a: Self::Acc) -> Self::Acc;
    fn acc_is_negative(a: Self::Acc) -> bool;
    fn acc_to_f64(a: Self::Acc) -> f64;
    /// `-a` when `flip` is set, `a` otherwise.
    fn acc_flip(a: Self::Acc, flip: bool) -> Self::Acc;

    /// Whether an iteration that mapped `prev` to `next` counts as converged.
    fn converged(prev: &[Self], next: &[Self]) -> bool;

    #[inline]
    fn with_sign(self, negative: bool) -> Self {
        if negative {
            self.negate()
        } else {
            self
        }
    }

    #[inline]
    fn min_mag(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    #[inline]
    fn bit(self) -> u8 {
        self.is_negative() as u8
    }
}

impl Llr for f64 {
    type Acc = f64;
    const ZERO: f64 = 0.0;

    #[inline]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    #[inline]
    fn negate(self) -> f64 {
        -self
    }
    #[inline]
    fn is_negative(self) -> bool {
        self < 0.0
    }
    #[inline]
    fn with_sign(self, negative: bool) -> f64 {
        f64::from_bits(self.to_bits() ^ ((negative as u64) << 63))
    }
    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn acc_abs(a: f64) -> f64 {
        a.abs()
    }
    #[inline]
    fn acc_is_negative(a: f64) -> bool {
        a < 0.0
    }
    #[inline]
    fn acc_to_f64(a: f64) -> f64 {
        a
    }
    #[inline]
    fn acc_flip(a: f64, flip: bool) -> f64 {
        f64::from_bits(a.to_bits() ^ ((flip as u64) << 63))
    }

    /// Exact float equality would essentially never trigger, so real LLRs
    /// converge once the hard decisions stop changing.
    fn converged(prev: &[f64], next: &[f64]) -> bool {
        prev.len() == next.len() && prev.iter().zip(next).all(|(a, b)| a.is_negative() == b.is_negative())
    }
}

impl Llr for i32 {
    type Acc = i64;
    const ZERO: i32 = 0;

    #[inline]
    fn abs(self) -> i32 {
        i32::abs(self)
    }
    #[inline]
    fn negate(self) -> i32 {
        -self
    }
    #[inline]
    fn is_negative(self) -> bool {
        self < 0
    }
    #[inline]
    fn widen(self) -> i64 {
        self as i64
    }
    #[inline]
    fn acc_abs(a: i64) -> i64 {
        a.abs()
    }
    #[inline]
    fn acc_is_negative(a: i64) -> bool {
        a < 0
    }
    #[inline]
    fn acc_to_f64(a: i64) -> f64 {
        a as f64
    }
    #[inline]
    fn acc_flip(a: i64, flip: bool) -> i64 {
        let mask = -(flip as i64);
        (a ^ mask) - mask
    }

    fn converged(prev: &[i32], next: &[i32]) -> bool {
        prev == next
    }
}

/// A length-`2^m` LLR vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum LlrVector {
    Real(Vec<f64>),
    Fixed { raw: Vec<i32>, format: QFormat },
}

impl LlrVector {
    /// Quantizes real LLRs into `format`.
    pub fn quantized(values: &[f64], format: QFormat) -> Self {
        LlrVector::Fixed { raw: values.iter().map(|&x| format.quantize(x)).collect(), format }
    }

    pub fn len(&self) -> usize {
        match self {
            LlrVector::Real(v) => v.len(),
            LlrVector::Fixed { raw, .. } => raw.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, LlrVector::Fixed { .. })
    }

    pub fn format(&self) -> Option<QFormat> {
        match self {
            LlrVector::Real(_) => None,
            LlrVector::Fixed { format, .. } => Some(*format),
        }
    }

    /// Real-valued view (raw values divided by the fixed-point scale).
    pub fn to_real(&self) -> Vec<f64> {
        match self {
            LlrVector::Real(v) => v.clone(),
            LlrVector::Fixed { raw, format } => raw.iter().map(|&r| format.to_real(r)).collect(),
        }
    }

    pub fn hard_decision(&self) -> Vec<u8> {
        match self {
            LlrVector::Real(v) => v.iter().map(|x| x.bit()).collect(),
            LlrVector::Fixed { raw, .. } => raw.iter().map(|x| x.bit()).collect(),
        }
    }
}

/// Hard decision of a slice.
pub fn hard_decision<T: Llr>(v: &[T]) -> Vec<u8> {
    v.iter().map(|x| x.bit()).collect()
}
