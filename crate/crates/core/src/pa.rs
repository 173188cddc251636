//! Projection-aggregation building blocks and the IPA decoder.
//!
//! The decoders are generic over [`Llr`], so one code path serves both the
//! real-valued model and the bit-exact fixed-point model. Public entry points
//! take and return [`LlrVector`] and dispatch on its mode.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};
use crate::fht::decode_into;
use crate::fixed::{divider_tree_in_place, QFormat};
use crate::gf2::{coset_table, enumerate_subspaces, CosetTable, MAX_M};
use crate::llr::{hard_decision, Llr, LlrVector};

/// How a second-order decoder combines its per-column estimates in
/// fixed-point mode. Real mode always sums exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondOrderCombine {
    /// Full-precision sum over every processed column.
    #[default]
    ExactSum,
    /// Full-precision sum over the allocated columns plus a divider-tree
    /// average of the fixed right-half columns, rescaled by a left shift.
    AdderDividerSplit,
}

/// Precision of a CPA adder stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Full,
    Sat,
}

/// How the fixed-point CPA accumulator is narrowed to the input format at
/// the end of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handoff {
    /// Clamp the accumulator to the input range.
    Saturate,
    /// Drop the low bits the accumulator has over the input format, then
    /// clamp.
    #[default]
    Rescale,
}

/// Fixed-point CPA summation: `p` contributions per cycle go through an
/// adder tree whose output feeds an accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpaArithmetic {
    pub p: usize,
    pub tree: Precision,
    pub acc: Precision,
    #[serde(default)]
    pub handoff: Handoff,
}

impl CpaArithmetic {
    pub fn new(p: usize, tree: Precision, acc: Precision) -> Self {
        CpaArithmetic { p, tree, acc, handoff: Handoff::default() }
    }
}

impl Default for CpaArithmetic {
    fn default() -> Self {
        CpaArithmetic::new(7, Precision::Full, Precision::Sat)
    }
}

/// Decoder parameters common to IPA, IUPA and CPA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub m: u32,
    pub r: u32,
    pub n_max: usize,
    /// `None` decodes in real arithmetic.
    pub quant: Option<QFormat>,
    /// Stop as soon as an iteration converges.
    pub early_stop: bool,
    pub second_order: SecondOrderCombine,
    pub cpa: CpaArithmetic,
}

impl DecoderConfig {
    /// Real-valued decoding with `ceil(m/2)` iterations.
    pub fn new(m: u32, r: u32) -> Self {
        DecoderConfig {
            m,
            r,
            n_max: m.div_ceil(2) as usize,
            quant: None,
            early_stop: true,
            second_order: SecondOrderCombine::default(),
            cpa: CpaArithmetic::default(),
        }
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_quant(mut self, q: Option<QFormat>) -> Self {
        self.quant = q;
        self
    }

    pub fn n(&self) -> usize {
        1 << self.m
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_M {
            return Err(Error::Config(format!("m = {} outside 1..={MAX_M}", self.m)));
        }
        if self.r > self.m {
            return Err(Error::Config(format!("r = {} exceeds m = {}", self.r, self.m)));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.cpa.p == 0 {
            return Err(Error::Config("CPA needs p >= 1".into()));
        }
        Ok(())
    }

    /// Checks that `llr` has the code length and the configured arithmetic.
    pub(crate) fn check_input(&self, llr: &LlrVector) -> Result<()> {
        check_len(self.n(), llr.len())?;
        match (self.quant, llr.format()) {
            (None, None) => Ok(()),
            (Some(q), Some(f)) if q == f => Ok(()),
            (want, got) => Err(Error::Config(format!(
                "decoder expects {} input, got {}",
                want.map_or("real".to_string(), |q| q.to_string()),
                got.map_or("real".to_string(), |q| q.to_string())
            ))),
        }
    }
}

/// Output of a decode call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decoded {
    pub codeword: Vec<u8>,
    pub iterations: usize,
    /// First-order decodings performed across all iterations.
    pub fod_calls: usize,
}

/// Value limits of one pipeline stage.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Limits<T> {
    pub lo: T,
    pub hi: T,
}

pub(crate) trait Arith: Llr {
    const FIXED: bool;
    /// Clamp to `lim`.
    fn limit(self, lim: Limits<Self>) -> Self;
    /// Average of `buf`, narrowed into `lim`. Fixed mode needs a power-of-two
    /// length.
    fn average(buf: &mut [Self::Acc], lim: Limits<Self>) -> Self;
    fn unbounded() -> Limits<Self>;
}

impl Arith for f64 {
    const FIXED: bool = false;
    #[inline]
    fn limit(self, _: Limits<f64>) -> f64 {
        self
    }
    fn average(buf: &mut [f64], _: Limits<f64>) -> f64 {
        buf.iter().sum::<f64>() / buf.len() as f64
    }
    fn unbounded() -> Limits<f64> {
        Limits { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }
}

impl Arith for i32 {
    const FIXED: bool = true;
    #[inline]
    fn limit(self, lim: Limits<i32>) -> i32 {
        self.clamp(lim.lo, lim.hi)
    }
    fn average(buf: &mut [i64], lim: Limits<i32>) -> i32 {
        divider_tree_in_place(buf).clamp(lim.lo as i64, lim.hi as i64) as i32
    }
    fn unbounded() -> Limits<i32> {
        Limits { lo: i32::MIN, hi: i32::MAX }
    }
}

pub(crate) fn q_limits(q: QFormat) -> Limits<i32> {
    Limits { lo: q.min_raw(), hi: q.max_raw() }
}

/// For a 1-D table `{0, k}`: `k` and the mask of the bits below `msb(k)`.
/// Coset `c` then holds `z0 = insert_zero(c)` and `z0 ^ k`.
#[inline]
fn line_of(table: &CosetTable) -> Option<(usize, usize)> {
    if table.coset_size() != 2 {
        return None;
    }
    let k = table.flat_members()[1] as usize;
    Some((k, (1usize << (usize::BITS - 1 - k.leading_zeros())) - 1))
}

#[inline]
fn insert_zero(c: usize, low: usize) -> usize {
    ((c & !low) << 1) | (c & low)
}

/// Min-sum projection onto a 1-D table, written to `out` (`len / 2`).
#[inline]
pub(crate) fn minsum_pairs<T: Arith>(l: &[T], table: &CosetTable, lim: Limits<T>, out: &mut [T]) {
    let combine = |a: T, b: T| a.abs().min_mag(b.abs()).with_sign(a.is_negative() != b.is_negative()).limit(lim);
    match line_of(table) {
        Some((k, low)) => {
            for (c, o) in out.iter_mut().enumerate() {
                let z0 = insert_zero(c, low);
                *o = combine(l[z0], l[z0 ^ k]);
            }
        }
        None => {
            for (o, pair) in out.iter_mut().zip(table.flat_members().chunks_exact(2)) {
                *o = combine(l[pair[0] as usize], l[pair[1] as usize]);
            }
        }
    }
}

/// Adds the pre-aggregated estimate `±L(z ⊕ shift)` to `acc`.
#[inline]
pub(crate) fn pre_aggregate_add<T: Llr>(l: &[T], chat: &[u8], table: &CosetTable, shift: usize, acc: &mut [T::Acc]) {
    match line_of(table) {
        Some((k, low)) => {
            for (c, &bit) in chat.iter().enumerate() {
                let z0 = insert_zero(c, low);
                let flip = bit == 1;
                acc[z0] = acc[z0] + T::acc_flip(l[z0 ^ shift].widen(), flip);
                acc[z0 ^ k] = acc[z0 ^ k] + T::acc_flip(l[z0 ^ k ^ shift].widen(), flip);
            }
        }
        None => {
            for (z, a) in acc.iter_mut().enumerate() {
                let flip = chat[table.coset_of(z as u32) as usize] == 1;
                *a = *a + T::acc_flip(l[z ^ shift].widen(), flip);
            }
        }
    }
}

/// Writes the pre-aggregated estimate into one slot of the per-coordinate
/// slot-major buffer `slots_buf[z * slots + slot]`.
#[inline]
pub(crate) fn pre_aggregate_slot<T: Llr>(
    l: &[T],
    chat: &[u8],
    table: &CosetTable,
    shift: usize,
    slots: usize,
    slot: usize,
    slots_buf: &mut [T::Acc],
) {
    match line_of(table) {
        Some((k, low)) => {
            for (c, &bit) in chat.iter().enumerate() {
                let z0 = insert_zero(c, low);
                let flip = bit == 1;
                slots_buf[z0 * slots + slot] = T::acc_flip(l[z0 ^ shift].widen(), flip);
                slots_buf[(z0 ^ k) * slots + slot] = T::acc_flip(l[z0 ^ k ^ shift].widen(), flip);
            }
        }
        None => {
            for z in 0..l.len() {
                let flip = chat[table.coset_of(z as u32) as usize] == 1;
                slots_buf[z * slots + slot] = T::acc_flip(l[z ^ shift].widen(), flip);
            }
        }
    }
}

/// 1-D coset tables `{0, i}` for `i = 1..2^m`, indexed by `i - 1`.
pub(crate) fn line_tables(m: u32) -> Result<Vec<CosetTable>> {
    Ok(enumerate_subspaces(m, 1)?.iter().map(coset_table).collect())
}

/// Reusable buffers for one first-order decoding.
#[derive(Debug)]
pub(crate) struct FodScratch<T: Llr> {
    pub proj: Vec<T>,
    pub fht: Vec<T::Acc>,
    pub chat: Vec<u8>,
}

impl<T: Llr> FodScratch<T> {
    pub fn new() -> Self {
        FodScratch { proj: Vec::new(), fht: Vec::new(), chat: Vec::new() }
    }

    /// Min-sum projection of `l` followed by first-order decoding; the
    /// decision ends up in `self.chat`.
    #[inline]
    pub fn project_decode(&mut self, l: &[T], table: &CosetTable, lim: Limits<T>)
    where
        T: Arith,
    {
        let half = l.len() / 2;
        self.proj.resize(half, T::ZERO);
        self.chat.resize(half, 0);
        minsum_pairs(l, table, lim, &mut self.proj);
        decode_into(&self.proj, &mut self.fht, &mut self.chat);
    }
}

/// Min-sum projection onto the cosets of a one-dimensional subspace.
pub fn minsum_project_1d(llr: &LlrVector, table: &CosetTable) -> Result<LlrVector> {
    if table.coset_size() != 2 {
        return domain(format!("min-sum projection needs a 1-D table, got dimension {}", table.subspace().dim()));
    }
    check_len(table.len(), llr.len())?;
    let half = table.num_cosets();
    Ok(match llr {
        LlrVector::Real(v) => {
            let mut out = vec![0.0; half];
            minsum_pairs(v, table, f64::unbounded(), &mut out);
            LlrVector::Real(out)
        }
        LlrVector::Fixed { raw, format } => {
            let mut out = vec![0; half];
            minsum_pairs(raw, table, q_limits(*format), &mut out);
            LlrVector::Fixed { raw: out, format: *format }
        }
    })
}

/// `L_agg(z) = (1 − 2 ĉ([z ⊕ 𝔹])) · L(z ⊕ shift)`.
///
/// In fixed mode the negation is exact, so `-(-2^(q-1))` leaves the input
/// range by one unit.
pub fn pre_aggregate(llr: &LlrVector, decoded: &[u8], table: &CosetTable, shift: u32) -> Result<LlrVector> {
    check_len(table.len(), llr.len())?;
    check_len(table.num_cosets(), decoded.len())?;
    if !table.subspace().contains(shift) {
        return domain(format!("shift {shift} is not in the projection subspace"));
    }
    let s = shift as usize;
    Ok(match llr {
        LlrVector::Real(v) => {
            let mut acc = vec![0.0; v.len()];
            pre_aggregate_add(v, decoded, table, s, &mut acc);
            LlrVector::Real(acc)
        }
        LlrVector::Fixed { raw, format } => {
            let mut acc = vec![0i64; raw.len()];
            pre_aggregate_add(raw, decoded, table, s, &mut acc);
            LlrVector::Fixed { raw: acc.into_iter().map(|v| v as i32).collect(), format: *format }
        }
    })
}

/// Coordinate-wise average. Real vectors use the exact mean. Fixed vectors
/// use the divider tree; when the count is not a power of two the inputs are
/// padded with all-zero vectors, and the result saturates to the format.
pub fn aggregate_average(vectors: &[LlrVector]) -> Result<LlrVector> {
    let Some(first) = vectors.first() else {
        return domain("aggregate_average of no vectors");
    };
    let n = first.len();
    for v in vectors {
        check_len(n, v.len())?;
        if v.format() != first.format() {
            return Err(Error::Config("aggregate_average mixes arithmetic modes".into()));
        }
    }
    Ok(match first.format() {
        None => {
            let count = vectors.len() as f64;
            let mut sum = vec![0.0; n];
            for v in vectors {
                if let LlrVector::Real(x) = v {
                    sum.iter_mut().zip(x).for_each(|(s, x)| *s += x);
                }
            }
            LlrVector::Real(sum.into_iter().map(|s| s / count).collect())
        }
        Some(format) => {
            let slots = vectors.len().next_power_of_two();
            let mut buf = vec![0i64; slots];
            let raw = (0..n)
                .map(|z| {
                    buf.fill(0);
                    for (s, v) in vectors.iter().enumerate() {
                        if let LlrVector::Fixed { raw, .. } = v {
                            buf[s] = raw[z] as i64;
                        }
                    }
                    i32::average(&mut buf, q_limits(format))
                })
                .collect();
            LlrVector::Fixed { raw, format }
        }
    })
}

/// Runs up to `n_max` iterations of `step`, stopping early on convergence.
pub(crate) fn iterate<T: Llr>(
    cfg: &DecoderConfig,
    input: &[T],
    mut step: impl FnMut(&[T], &mut Vec<T>) -> usize,
) -> Decoded {
    let mut cur = input.to_vec();
    let mut next = Vec::with_capacity(cur.len());
    let mut fod_calls = 0;
    let mut iterations = 0;
    while iterations < cfg.n_max {
        next.clear();
        fod_calls += step(&cur, &mut next);
        iterations += 1;
        let done = T::converged(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        if done && cfg.early_stop {
            break;
        }
    }
    Decoded { codeword: hard_decision(&cur), iterations, fod_calls }
}

/// Iterative projection-aggregation decoder for RM(m, 2) and RM(m, 3).
#[derive(Debug, Clone)]
pub struct IpaDecoder {
    cfg: DecoderConfig,
    top: Vec<CosetTable>,
    inner: Vec<CosetTable>,
}

impl IpaDecoder {
    pub fn new(cfg: DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        if !(2..=3).contains(&cfg.r) || cfg.m < cfg.r + 1 {
            return Err(Error::Config(format!(
                "IPA supports RM(m,2) and RM(m,3) with m > r, got RM({},{})",
                cfg.m, cfg.r
            )));
        }
        let top = line_tables(cfg.m)?;
        let inner = if cfg.r == 3 { line_tables(cfg.m - 1)? } else { Vec::new() };
        Ok(IpaDecoder { cfg, top, inner })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// First-order decodings in one iteration.
    pub fn fods_per_iteration(&self) -> usize {
        let n = self.cfg.n();
        match self.cfg.r {
            2 => n - 1,
            _ => (n - 1) * (n / 2 - 1),
        }
    }

    pub fn decode(&self, llr: &LlrVector) -> Result<Decoded> {
        self.cfg.check_input(llr)?;
        Ok(match llr {
            LlrVector::Real(v) => self.run(v, f64::unbounded()),
            LlrVector::Fixed { raw, format } => self.run(raw, q_limits(*format)),
        })
    }

    fn run<T: Arith>(&self, input: &[T], lim: Limits<T>) -> Decoded {
        let n = self.cfg.n();
        // Fixed mode pads the 2^m - 1 estimates with a zero vector for the
        // divider tree.
        let slots = if T::FIXED { n } else { n - 1 };
        let mut buf = vec![T::Acc::default(); n * slots];
        let mut fod = FodScratch::<T>::new();
        let mut second = SecondOrderScratch::<T>::new();
        iterate(&self.cfg, input, |l, next| {
            buf.fill(T::Acc::default());
            let mut calls = 0;
            for (idx, table) in self.top.iter().enumerate() {
                let shift = idx + 1;
                let chat: &[u8] = if self.cfg.r == 2 {
                    fod.project_decode(l, table, lim);
                    calls += 1;
                    &fod.chat
                } else {
                    second.l2.resize(n / 2, T::ZERO);
                    minsum_pairs(l, table, lim, &mut second.l2);
                    calls += second.sweep_all(&self.inner, lim);
                    &second.chat
                };
                pre_aggregate_slot(l, chat, table, shift, slots, idx, &mut buf);
            }
            next.extend(buf.chunks_exact_mut(slots).map(|c| T::average(c, lim)));
            calls
        })
    }
}

/// Buffers for a single-pass second-order sweep.
#[derive(Debug)]
pub(crate) struct SecondOrderScratch<T: Llr> {
    pub l2: Vec<T>,
    pub sum: Vec<T::Acc>,
    pub chat: Vec<u8>,
    pub fod: FodScratch<T>,
}

impl<T: Arith> SecondOrderScratch<T> {
    pub fn new() -> Self {
        SecondOrderScratch { l2: Vec::new(), sum: Vec::new(), chat: Vec::new(), fod: FodScratch::new() }
    }

    /// Decodes `self.l2` with every column of `tables`, summing exactly.
    /// Returns the number of first-order decodings.
    pub fn sweep_all(&mut self, tables: &[CosetTable], lim: Limits<T>) -> usize {
        let half = self.l2.len();
        self.sum.clear();
        self.sum.resize(half, T::Acc::default());
        for (j, table) in tables.iter().enumerate() {
            self.fod.project_decode(&self.l2, table, lim);
            pre_aggregate_add(&self.l2, &self.fod.chat, table, j + 1, &mut self.sum);
        }
        self.decide();
        tables.len()
    }

    pub fn decide(&mut self) {
        self.chat.clear();
        self.chat.extend(self.sum.iter().map(|&s| T::acc_is_negative(s) as u8));
    }
}

/// Convenience wrapper: builds an [`IpaDecoder`] and decodes one vector.
pub fn ipa_decode(llr: &LlrVector, cfg: &DecoderConfig) -> Result<Decoded> {
    IpaDecoder::new(cfg.clone())?.decode(llr)
}
