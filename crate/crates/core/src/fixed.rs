//! Fixed-point LLR arithmetic: the Q(i:f) format, saturating additions,
//! adder trees and the shift-based divider tree.
//!
//! Raw values are integers scaled by `2^frac_bits`. The integer part counts
//! the sign bit, so Q(3:2) is a 5-bit two's-complement value covering
//! `[-4.00, +3.75]` in steps of `0.25`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A Q(int:frac) fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    pub int_bits: u32,
    pub frac_bits: u32,
}

impl QFormat {
    /// The 5-bit channel LLR format used throughout the experiments.
    pub const Q3_2: QFormat = QFormat { int_bits: 3, frac_bits: 2 };

    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self> {
        if int_bits == 0 || int_bits + frac_bits > 24 {
            return domain(format!("unsupported format Q({int_bits}:{frac_bits})"));
        }
        Ok(QFormat { int_bits, frac_bits })
    }

    pub fn total_bits(self) -> u32 {
        self.int_bits + self.frac_bits
    }

    pub fn min_raw(self) -> i32 {
        -(1 << (self.total_bits() - 1))
    }

    pub fn max_raw(self) -> i32 {
        (1 << (self.total_bits() - 1)) - 1
    }

    pub fn scale(self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    pub fn range(self) -> SatRange {
        SatRange { lo: self.min_raw() as i64, hi: self.max_raw() as i64 }
    }

    /// Round half away from zero onto the `2^-frac` grid, then saturate.
    pub fn quantize(self, x: f64) -> i32 {
        if x.is_nan() {
            return 0;
        }
        let scaled = (x * self.scale()).round();
        scaled.clamp(self.min_raw() as f64, self.max_raw() as f64) as i32
    }

    pub fn to_real(self, raw: i32) -> f64 {
        raw as f64 / self.scale()
    }

    #[inline]
    pub fn saturate(self, raw: i32) -> i32 {
        raw.clamp(self.min_raw(), self.max_raw())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let body = s
            .trim()
            .strip_prefix("Q(")
            .or_else(|| s.trim().strip_prefix("q("))
            .and_then(|b| b.strip_suffix(')'))
            .or_else(|| s.trim().strip_prefix('Q').or_else(|| s.trim().strip_prefix('q')));
        let Some(body) = body else {
            return domain(format!("cannot parse fixed-point format {s:?}"));
        };
        let mut parts = body.split([':', '.']);
        let (Some(i), Some(f), None) = (parts.next(), parts.next(), parts.next()) else {
            return domain(format!("cannot parse fixed-point format {s:?}"));
        };
        let int_bits = i.trim().parse().map_err(|_| crate::Error::Domain(format!("bad format {s:?}")))?;
        let frac_bits = f.trim().parse().map_err(|_| crate::Error::Domain(format!("bad format {s:?}")))?;
        QFormat::new(int_bits, frac_bits)
    }
}

impl std::fmt::Display for QFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Q({}:{})", self.int_bits, self.frac_bits)
    }
}

/// Closed clamp interval for saturating arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatRange {
    pub lo: i64,
    pub hi: i64,
}

impl SatRange {
    /// `[-bound, bound]`.
    pub fn symmetric(bound: i64) -> Self {
        SatRange { lo: -bound, hi: bound }
    }

    /// Range of a `bits`-wide two's-complement register.
    pub fn twos_complement(bits: u32) -> Self {
        SatRange { lo: -(1i64 << (bits - 1)), hi: (1i64 << (bits - 1)) - 1 }
    }

    #[inline]
    pub fn clamp(self, v: i64) -> i64 {
        v.clamp(self.lo, self.hi)
    }
}

/// `a + b` clamped to `[-bound, bound]`.
pub fn sat_add(a: i64, b: i64, bound: i64) -> Result<i64> {
    if bound <= 0 {
        return domain(format!("saturation bound must be positive, got {bound}"));
    }
    Ok(SatRange::symmetric(bound).clamp(a + b))
}

/// `ceil(log2(p))`, with `p = 1` giving 0.
pub fn ceil_log2(p: usize) -> u32 {
    if p <= 1 {
        0
    } else {
        usize::BITS - (p - 1).leading_zeros()
    }
}

/// Precision policy of an adder tree or accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AddPolicy {
    /// Exact integer addition (wide enough to never overflow).
    FullPrecision,
    /// Every addition result is clamped to the range.
    Saturating(SatRange),
}

impl AddPolicy {
    #[inline]
    pub fn add(self, a: i64, b: i64) -> i64 {
        match self {
            AddPolicy::FullPrecision => a + b,
            AddPolicy::Saturating(r) => r.clamp(a + b),
        }
    }
}

/// Pairwise adder tree over `values` with the given policy applied at every
/// node. An odd element at the end of a level is carried up unchanged.
pub fn tree_reduce(values: &mut [i64], policy: AddPolicy) -> i64 {
    if values.is_empty() {
        return 0;
    }
    let mut len = values.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            values[i] = policy.add(values[2 * i], values[2 * i + 1]);
        }
        if len % 2 == 1 {
            values[half] = values[len - 1];
            len = half + 1;
        } else {
            len = half;
        }
    }
    values[0]
}

/// Full-precision adder tree over one cycle's `p` inputs of format `q`. The
/// exact sum always fits in `q.total_bits() + ceil(log2 p)` bits.
pub fn adder_tree_sum(inputs: &[i64], q: QFormat, p: usize) -> Result<i64> {
    if inputs.len() != p {
        return domain(format!("adder tree expects {p} inputs, got {}", inputs.len()));
    }
    let mut buf = inputs.to_vec();
    let sum = tree_reduce(&mut buf, AddPolicy::FullPrecision);
    debug_assert!({
        let range = SatRange::twos_complement(q.total_bits() + ceil_log2(p));
        inputs.iter().any(|&v| v < q.min_raw() as i64 || v > q.max_raw() as i64) || range.clamp(sum) == sum
    });
    Ok(sum)
}

/// Averages `2^levels` inputs by `levels` rounds of pairwise `(a + b) >> 1`.
/// Each round truncates toward negative infinity.
pub fn divider_tree_average(inputs: &[i64], levels: u32) -> Result<i64> {
    if inputs.len() != 1usize << levels {
        return domain(format!(
            "divider tree with {levels} levels needs {} inputs, got {}",
            1usize << levels,
            inputs.len()
        ));
    }
    let mut buf = inputs.to_vec();
    Ok(divider_tree_in_place(&mut buf))
}

/// Same as [`divider_tree_average`], reusing `buf` (length a power of two).
pub(crate) fn divider_tree_in_place(buf: &mut [i64]) -> i64 {
    let mut len = buf.len();
    debug_assert!(len.is_power_of_two());
    while len > 1 {
        len /= 2;
        for i in 0..len {
            buf[i] = (buf[2 * i] + buf[2 * i + 1]) >> 1;
        }
    }
    buf[0]
}
