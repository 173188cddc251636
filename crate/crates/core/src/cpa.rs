//! Collapsed projection-aggregation: one-shot projections onto every
//! `(r−1)`-dimensional subspace, decoded with first/second-minimum
//! pre-aggregation.

use serde::Serialize;

use crate::error::{check_len, domain, Error, Result};
use crate::fht::decode_into;
use crate::fixed::{ceil_log2, tree_reduce, AddPolicy, QFormat, SatRange};
use crate::gf2::{coset_table, enumerate_subspaces, CosetTable};
use crate::llr::{Llr, LlrVector};
use crate::pa::{iterate, q_limits, Arith, CpaArithmetic, Decoded, DecoderConfig, Handoff, Limits, Precision};

/// First and second minimum magnitude of one coset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosetMinStats<T> {
    pub fmin: T,
    pub smin: T,
    /// Coordinate holding `fmin`; the smaller coordinate wins ties.
    pub argmin: u32,
    /// Product of the member signs is negative.
    pub negative: bool,
}

fn stats_into<T: Llr>(llr: &[T], table: &CosetTable, out: &mut Vec<CosetMinStats<T>>) {
    out.clear();
    let size = table.coset_size();
    for coset in table.flat_members().chunks_exact(size) {
        let first = llr[coset[0] as usize];
        let mut s = CosetMinStats { fmin: first.abs(), smin: T::ZERO, argmin: coset[0], negative: first.is_negative() };
        let mut have_second = false;
        for &z in &coset[1..] {
            let v = llr[z as usize];
            let a = v.abs();
            s.negative ^= v.is_negative();
            if a < s.fmin {
                s.smin = s.fmin;
                s.fmin = a;
                s.argmin = z;
            } else if !have_second || a < s.smin {
                s.smin = a;
            }
            have_second = true;
        }
        out.push(s);
    }
}

/// Per-coset minimum statistics of `llr` over the cosets of `table`.
pub fn coset_min_stats<T: Llr>(llr: &[T], table: &CosetTable) -> Result<Vec<CosetMinStats<T>>> {
    if table.coset_size() < 2 {
        return domain("coset statistics need cosets of size at least 2");
    }
    check_len(table.len(), llr.len())?;
    let mut out = Vec::with_capacity(table.num_cosets());
    stats_into(llr, table, &mut out);
    Ok(out)
}

/// Min-sum projection from coset statistics: `sign · fmin` per coset.
pub fn cpa_project<T: Llr>(stats: &[CosetMinStats<T>]) -> Vec<T> {
    stats.iter().map(|s| s.fmin.with_sign(s.negative)).collect()
}

#[inline]
fn contribution<T: Llr>(v: T, z: u32, s: &CosetMinStats<T>, flip: bool) -> T {
    let mag = if z == s.argmin { s.smin } else { s.fmin };
    mag.with_sign(s.negative ^ v.is_negative() ^ flip)
}

/// Pre-aggregated estimate of every coordinate: the min-sum over the rest of
/// its coset, negated where the decoded projection bit is 1.
pub fn cpa_pre_aggregate<T: Llr>(
    llr: &[T],
    stats: &[CosetMinStats<T>],
    decoded: &[u8],
    table: &CosetTable,
) -> Result<Vec<T>> {
    check_len(table.len(), llr.len())?;
    check_len(table.num_cosets(), stats.len())?;
    check_len(table.num_cosets(), decoded.len())?;
    Ok((0..llr.len() as u32)
        .map(|z| {
            let t = table.coset_of(z) as usize;
            contribution(llr[z as usize], z, &stats[t], decoded[t] == 1)
        })
        .collect())
}

/// CPA decoder for RM(m, r), `r ≥ 2`.
#[derive(Debug, Clone)]
pub struct CpaDecoder {
    cfg: DecoderConfig,
    tables: Vec<CosetTable>,
}

impl CpaDecoder {
    pub fn new(cfg: DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.r < 2 || cfg.r >= cfg.m {
            return Err(Error::Config(format!("CPA needs 2 <= r < m, got RM({},{})", cfg.m, cfg.r)));
        }
        let tables = enumerate_subspaces(cfg.m, cfg.r - 1)?.iter().map(coset_table).collect();
        Ok(CpaDecoder { cfg, tables })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    /// Number of projections `n_P` (first-order decodings per iteration).
    pub fn num_projections(&self) -> usize {
        self.tables.len()
    }

    pub fn decode(&self, llr: &LlrVector) -> Result<Decoded> {
        self.cfg.check_input(llr)?;
        Ok(match llr {
            LlrVector::Real(v) => self.run_real(v),
            LlrVector::Fixed { raw, format } => self.run_fixed(raw, *format),
        })
    }

    /// Computes every projection's contribution in enumeration order,
    /// handing each one to `sink(index, contribution)`.
    fn sweep<T: Arith>(&self, l: &[T], lim: Limits<T>, scratch: &mut Scratch<T>, mut sink: impl FnMut(usize, &[T])) {
        let n = l.len();
        for (idx, table) in self.tables.iter().enumerate() {
            stats_into(l, table, &mut scratch.stats);
            scratch.proj.clear();
            scratch.proj.extend(scratch.stats.iter().map(|s| s.fmin.with_sign(s.negative).limit(lim)));
            scratch.chat.resize(scratch.proj.len(), 0);
            decode_into(&scratch.proj, &mut scratch.fht, &mut scratch.chat);
            scratch.contrib.resize(n, T::ZERO);
            let size = table.coset_size();
            for ((coset, s), &bit) in table.flat_members().chunks_exact(size).zip(&scratch.stats).zip(&scratch.chat) {
                for &z in coset {
                    scratch.contrib[z as usize] = contribution(l[z as usize], z, s, bit == 1);
                }
            }
            sink(idx, &scratch.contrib);
        }
    }

    fn run_real(&self, input: &[f64]) -> Decoded {
        let n_p = self.tables.len() as f64;
        let mut scratch = Scratch::new();
        let mut sum = vec![0.0; input.len()];
        iterate(&self.cfg, input, |l, next| {
            sum.fill(0.0);
            self.sweep(l, f64::unbounded(), &mut scratch, |_, c| {
                sum.iter_mut().zip(c).for_each(|(s, c)| *s += c);
            });
            next.extend(sum.iter().map(|s| s / n_p));
            self.tables.len()
        })
    }

    fn run_fixed(&self, input: &[i32], q: QFormat) -> Decoded {
        let n = input.len();
        let policy = FixedPolicy::new(self.cfg.cpa, q, self.tables.len());
        let lim = q_limits(q);
        let p = self.cfg.cpa.p;
        let mut scratch = Scratch::new();
        // batch[k * n + z]: contribution of the k-th projection of the current cycle
        let mut batch = vec![0i64; p * n];
        let mut acc = vec![0i64; n];
        let mut tree = vec![0i64; p];
        let n_p = self.tables.len();
        iterate(&self.cfg, input, |l, next| {
            acc.fill(0);
            self.sweep(l, lim, &mut scratch, |idx, c| {
                let k = idx % p;
                for (b, &v) in batch[k * n..(k + 1) * n].iter_mut().zip(c) {
                    *b = v as i64;
                }
                if k + 1 == p || idx + 1 == n_p {
                    let width = k + 1;
                    for (z, a) in acc.iter_mut().enumerate() {
                        for (j, t) in tree[..width].iter_mut().enumerate() {
                            *t = batch[j * n + z];
                        }
                        let s = tree_reduce(&mut tree[..width], policy.tree);
                        *a = policy.acc.add(*a, s);
                    }
                }
            });
            next.extend(acc.iter().map(|&a| lim_i64(a >> policy.handoff_shift, lim)));
            n_p
        })
    }
}

fn lim_i64(a: i64, lim: Limits<i32>) -> i32 {
    a.clamp(lim.lo as i64, lim.hi as i64) as i32
}

/// Adder-tree and accumulator policies resolved for a format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPolicy {
    pub tree: AddPolicy,
    pub acc: AddPolicy,
    /// Right shift applied to the accumulator before it is clamped to the
    /// input format for the next iteration.
    pub handoff_shift: u32,
}

impl FixedPolicy {
    /// A saturating tree clamps to the input format. A saturating accumulator
    /// behind a full-precision tree clamps to `±2^(q−1+⌈log2 p⌉)`; behind a
    /// saturating tree it stays at the input format too. A full-precision
    /// accumulator over `n_p` projections is `⌈log2 n_p⌉` bits wider than the
    /// input.
    pub fn new(arith: CpaArithmetic, q: QFormat, n_p: usize) -> Self {
        let tree = match arith.tree {
            Precision::Full => AddPolicy::FullPrecision,
            Precision::Sat => AddPolicy::Saturating(q.range()),
        };
        let (acc, extra_bits) = match (arith.acc, arith.tree) {
            (Precision::Full, _) => (AddPolicy::FullPrecision, ceil_log2(n_p)),
            (Precision::Sat, Precision::Sat) => (AddPolicy::Saturating(q.range()), 0),
            (Precision::Sat, Precision::Full) => {
                let bits = ceil_log2(arith.p);
                (AddPolicy::Saturating(SatRange::symmetric(1 << (q.total_bits() - 1 + bits))), bits)
            }
        };
        let handoff_shift = match arith.handoff {
            Handoff::Saturate => 0,
            Handoff::Rescale => extra_bits,
        };
        FixedPolicy { tree, acc, handoff_shift }
    }
}

#[derive(Debug)]
struct Scratch<T: Llr> {
    stats: Vec<CosetMinStats<T>>,
    proj: Vec<T>,
    fht: Vec<T::Acc>,
    chat: Vec<u8>,
    contrib: Vec<T>,
}

impl<T: Llr> Scratch<T> {
    fn new() -> Self {
        Scratch { stats: Vec::new(), proj: Vec::new(), fht: Vec::new(), chat: Vec::new(), contrib: Vec::new() }
    }
}

/// Convenience wrapper: builds a [`CpaDecoder`] and decodes one vector.
pub fn cpa_decode(llr: &LlrVector, cfg: &DecoderConfig) -> Result<Decoded> {
    CpaDecoder::new(cfg.clone())?.decode(llr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2::canonical_span;
    use crate::rm::{binary_project, RmCode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_table() -> CosetTable {
        // span{1, 2} in F₂²: one coset holding every coordinate
        coset_table(&canonical_span(2, &[1, 2]).unwrap())
    }

    #[test]
    fn stats_example() {
        let l = [1.0, -2.0, 0.5, 3.0];
        let s = coset_min_stats(&l, &plane_table()).unwrap();
        assert_eq!(s, vec![CosetMinStats { fmin: 0.5, smin: 1.0, argmin: 2, negative: true }]);
        assert_eq!(cpa_project(&s), vec![-0.5]);
        let s = coset_min_stats(&[2.0, -2.0, 2.0, 2.0], &plane_table()).unwrap();
        assert_eq!((s[0].fmin, s[0].smin, s[0].argmin), (2.0, 2.0, 0));
        let line = coset_table(&canonical_span(2, &[0b11]).unwrap());
        assert!(coset_min_stats(&l, &line).is_ok());
    }

    #[test]
    fn stats_match_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let tables: Vec<_> = enumerate_subspaces(5, 2).unwrap().iter().map(coset_table).collect();
        for _ in 0..1000 {
            let l: Vec<f64> = (0..32).map(|_| (rng.random_range(-8..8) as f64) / 2.0).collect();
            let t = &tables[rng.random_range(0..tables.len())];
            let stats = coset_min_stats(&l, t).unwrap();
            for (c, s) in stats.iter().enumerate() {
                let mut members: Vec<(f64, u32)> = t.members(c).iter().map(|&z| (l[z as usize].abs(), z)).collect();
                members.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(s.fmin, members[0].0);
                assert_eq!(s.smin, members[1].0);
                assert_eq!(s.argmin, members[0].1);
                let negs = t.members(c).iter().filter(|&&z| l[z as usize] < 0.0).count();
                assert_eq!(s.negative, negs % 2 == 1);
            }
        }
    }

    #[test]
    fn pre_aggregate_example() {
        let l = [1.0, -2.0, 0.5, 3.0];
        let t = plane_table();
        let s = coset_min_stats(&l, &t).unwrap();
        assert_eq!(cpa_pre_aggregate(&l, &s, &[0], &t).unwrap(), vec![-0.5, 0.5, -1.0, -0.5]);
        assert_eq!(cpa_pre_aggregate(&l, &s, &[1], &t).unwrap(), vec![0.5, -0.5, 1.0, 0.5]);
        assert!(cpa_pre_aggregate(&l, &s, &[0, 1], &t).is_err());
    }

    #[test]
    fn pre_aggregate_is_leave_one_out_minsum() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (m, d) in [(5u32, 2u32), (6, 2), (6, 3)] {
            let tables: Vec<_> = enumerate_subspaces(m, d).unwrap().iter().map(coset_table).collect();
            for _ in 0..200 {
                let l: Vec<f64> = (0..1 << m).map(|_| (rng.random_range(-12..12) as f64) / 4.0).collect();
                let t = &tables[rng.random_range(0..tables.len())];
                let stats = coset_min_stats(&l, t).unwrap();
                let chat: Vec<u8> = (0..t.num_cosets()).map(|_| rng.random_range(0..2)).collect();
                let got = cpa_pre_aggregate(&l, &stats, &chat, t).unwrap();
                for z in 0..1u32 << m {
                    let c = t.coset_of(z) as usize;
                    let others: Vec<f64> = t.members(c).iter().filter(|&&w| w != z).map(|&w| l[w as usize]).collect();
                    let mag = others.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
                    let neg = others.iter().filter(|x| **x < 0.0).count() % 2 == 1;
                    let expect = if neg ^ (chat[c] == 1) { -mag } else { mag };
                    assert_eq!(got[z as usize], expect);
                }
            }
        }
    }

    #[test]
    fn projection_signs_match_binary_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let code = RmCode::new(6, 3).unwrap();
        let tables: Vec<_> = enumerate_subspaces(6, 2).unwrap().iter().map(coset_table).collect();
        for _ in 0..100 {
            let u: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
            let c = code.encode(&u).unwrap();
            let l: Vec<f64> = c.iter().map(|&b| if b == 0 { 1.5 } else { -1.5 }).collect();
            let t = &tables[rng.random_range(0..tables.len())];
            let proj = cpa_project(&coset_min_stats(&l, t).unwrap());
            let signs: Vec<u8> = proj.iter().map(|x| (*x < 0.0) as u8).collect();
            assert_eq!(signs, binary_project(&c, t).unwrap());
        }
    }

    #[test]
    fn projection_counts() {
        assert_eq!(CpaDecoder::new(DecoderConfig::new(5, 3)).unwrap().num_projections(), 155);
        assert_eq!(CpaDecoder::new(DecoderConfig::new(6, 3)).unwrap().num_projections(), 651);
        assert_eq!(CpaDecoder::new(DecoderConfig::new(7, 3)).unwrap().num_projections(), 2667);
        assert_eq!(CpaDecoder::new(DecoderConfig::new(5, 2)).unwrap().num_projections(), 31);
        assert!(CpaDecoder::new(DecoderConfig::new(5, 1)).is_err());
    }

    #[test]
    fn noiseless_decodes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for (m, r) in [(5u32, 3u32), (6, 3), (5, 2)] {
            let code = RmCode::new(m, r).unwrap();
            let dec = CpaDecoder::new(DecoderConfig::new(m, r)).unwrap();
            let fixed = CpaDecoder::new(DecoderConfig::new(m, r).with_quant(Some(QFormat::Q3_2))).unwrap();
            for _ in 0..5 {
                let u: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
                let c = code.encode(&u).unwrap();
                let l: Vec<f64> = c.iter().map(|&b| if b == 0 { 2.0 } else { -2.0 }).collect();
                let out = dec.decode(&LlrVector::Real(l.clone())).unwrap();
                assert_eq!((out.codeword, out.iterations), (c.clone(), 1));
                assert_eq!(out.fod_calls, dec.num_projections());
                let out = fixed.decode(&LlrVector::quantized(&l, QFormat::Q3_2)).unwrap();
                assert_eq!(out.codeword, c);
            }
        }
    }

    #[test]
    fn policy_ranges() {
        let q = QFormat::Q3_2;
        let fp_sat = FixedPolicy::new(CpaArithmetic::new(7, Precision::Full, Precision::Sat), q, 651);
        assert_eq!(fp_sat.acc, AddPolicy::Saturating(SatRange::symmetric(128)));
        assert_eq!(fp_sat.tree, AddPolicy::FullPrecision);
        assert_eq!(fp_sat.handoff_shift, 3);
        let sat = FixedPolicy::new(CpaArithmetic::new(7, Precision::Sat, Precision::Sat), q, 651);
        assert_eq!(sat.acc, AddPolicy::Saturating(SatRange { lo: -16, hi: 15 }));
        assert_eq!(sat.handoff_shift, 0);
        let fp = FixedPolicy::new(CpaArithmetic::new(7, Precision::Full, Precision::Full), q, 651);
        assert_eq!(fp.handoff_shift, 10);
        let mut clamp = CpaArithmetic::new(7, Precision::Full, Precision::Sat);
        clamp.handoff = Handoff::Saturate;
        assert_eq!(FixedPolicy::new(clamp, q, 651).handoff_shift, 0);
    }

    #[test]
    fn full_precision_fixed_tracks_exact_sum() {
        // With full-precision adders the fixed decoder's accumulator equals the
        // plain integer sum of all contributions, so its decisions match a
        // real-valued decoder that sums the same quantized input.
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let q = QFormat::Q3_2;
        let arith = CpaArithmetic::new(7, Precision::Full, Precision::Full);
        let mut cfg = DecoderConfig::new(5, 3).with_quant(Some(q)).with_n_max(1);
        cfg.cpa = arith;
        let fixed = CpaDecoder::new(cfg.clone()).unwrap();
        let real = CpaDecoder::new(cfg.with_quant(None)).unwrap();
        for _ in 0..50 {
            let raw: Vec<i32> = (0..32).map(|_| rng.random_range(-16..=15)).collect();
            let real_in: Vec<f64> = raw.iter().map(|&r| r as f64).collect();
            let a = fixed.decode(&LlrVector::Fixed { raw, format: q }).unwrap();
            let b = real.decode(&LlrVector::Real(real_in)).unwrap();
            assert_eq!(a.codeword, b.codeword);
        }
    }
}
