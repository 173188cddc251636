//! IUPA decoding of RM(m, 3) driven by a projection schedule.

use crate::allocation::{build_redundancy_matrix, IupaSchedule};
use crate::error::{check_len, Error, Result};
use crate::fixed::divider_tree_in_place;
use crate::gf2::CosetTable;
use crate::llr::{Llr, LlrVector};
use crate::pa::{
    iterate, line_tables, minsum_pairs, pre_aggregate_add, pre_aggregate_slot, q_limits, Arith, Decoded, DecoderConfig,
    FodScratch, Limits, SecondOrderCombine,
};

/// How one group combines its second-order estimates.
#[derive(Debug, Clone, PartialEq, Eq)]
struct CombinePlan {
    /// Columns summed at full precision.
    exact: Vec<usize>,
    /// Right-half columns averaged per cycle by a divider tree, then
    /// scaled back up by `2^shift`.
    chunks: Vec<Vec<usize>>,
    shift: u32,
}

impl CombinePlan {
    fn exact(cols: &[usize]) -> Self {
        CombinePlan { exact: cols.to_vec(), chunks: Vec::new(), shift: 0 }
    }

    /// Allocated columns go through the adder tree; the `2^(m−2)` right-half
    /// columns are handled `2^(m−2−l)` per cycle.
    fn split(m: u32, lambda: usize, cols: &[usize]) -> Self {
        let right = 1usize << (m - 2);
        let (exact, rest): (Vec<usize>, Vec<usize>) = cols.iter().partition(|&&k| k < right);
        let width = (right / lambda).max(1);
        CombinePlan {
            exact,
            chunks: rest.chunks(width).map(<[usize]>::to_vec).collect(),
            shift: width.trailing_zeros(),
        }
    }

    fn len(&self) -> usize {
        self.exact.len() + self.chunks.iter().map(Vec::len).sum::<usize>()
    }
}

#[derive(Debug)]
struct GroupScratch<T: Llr> {
    l2: Vec<T>,
    sum: Vec<T::Acc>,
    part: Vec<T::Acc>,
    tree: Vec<i64>,
    chunk_parts: Vec<Vec<T::Acc>>,
    chat: Vec<u8>,
    fod: FodScratch<T>,
}

impl<T: Arith> GroupScratch<T> {
    fn new() -> Self {
        GroupScratch {
            l2: Vec::new(),
            sum: Vec::new(),
            part: Vec::new(),
            tree: Vec::new(),
            chunk_parts: Vec::new(),
            chat: Vec::new(),
            fod: FodScratch::new(),
        }
    }
}

/// Second-order decoding of `s.l2` over the plan's columns; the hard
/// decision ends up in `s.chat`. Returns the number of first-order decodings.
fn second_order<T: Arith>(
    s: &mut GroupScratch<T>,
    plan: &CombinePlan,
    tables: &[CosetTable],
    lim: Limits<T>,
    shift_chunk: impl Fn(&mut [Vec<T::Acc>], &mut Vec<i64>, u32, &mut [T::Acc]),
) -> usize {
    let half = s.l2.len();
    s.sum.clear();
    s.sum.resize(half, T::Acc::default());
    for &k in &plan.exact {
        let table = &tables[k - 1];
        s.fod.project_decode(&s.l2, table, lim);
        pre_aggregate_add(&s.l2, &s.fod.chat, table, k, &mut s.sum);
    }
    for chunk in &plan.chunks {
        s.chunk_parts.resize_with(chunk.len(), Vec::new);
        for (part, &k) in s.chunk_parts.iter_mut().zip(chunk) {
            let table = &tables[k - 1];
            s.fod.project_decode(&s.l2, table, lim);
            part.clear();
            part.resize(half, T::Acc::default());
            pre_aggregate_add(&s.l2, &s.fod.chat, table, k, part);
        }
        s.part.clear();
        s.part.resize(half, T::Acc::default());
        shift_chunk(&mut s.chunk_parts[..chunk.len()], &mut s.tree, plan.shift, &mut s.part);
        for (a, &b) in s.sum.iter_mut().zip(&s.part) {
            *a = *a + b;
        }
    }
    s.chat.clear();
    s.chat.extend(s.sum.iter().map(|&v| T::acc_is_negative(v) as u8));
    plan.len()
}

/// Divider-tree average of one cycle's estimates, scaled back by `2^shift`.
fn fixed_chunk(parts: &mut [Vec<i64>], tree: &mut Vec<i64>, shift: u32, out: &mut [i64]) {
    let width = parts.len().next_power_of_two();
    for (z, o) in out.iter_mut().enumerate() {
        tree.clear();
        tree.extend(parts.iter().map(|p| p[z]));
        tree.resize(width, 0);
        *o = divider_tree_in_place(tree) << shift;
    }
}

fn real_chunk(parts: &mut [Vec<f64>], _: &mut Vec<i64>, _: u32, out: &mut [f64]) {
    for p in parts.iter() {
        out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
    }
}

/// IUPA decoder for RM(m, 3).
#[derive(Debug, Clone)]
pub struct IupaDecoder {
    cfg: DecoderConfig,
    schedule: IupaSchedule,
    top: Vec<CosetTable>,
    inner: Vec<CosetTable>,
    /// `(row, plan index)` in ascending row order.
    rows: Vec<(usize, usize)>,
    plans: Vec<CombinePlan>,
}

impl IupaDecoder {
    pub fn new(cfg: DecoderConfig, schedule: IupaSchedule) -> Result<Self> {
        cfg.validate()?;
        if cfg.r != 3 {
            return Err(Error::Config(format!("IUPA is defined for r = 3, got r = {}", cfg.r)));
        }
        if schedule.m != cfg.m {
            return Err(Error::Config(format!("schedule is for m = {}, decoder has m = {}", schedule.m, cfg.m)));
        }
        let rm = build_redundancy_matrix(cfg.m).map_err(|e| Error::Config(e.to_string()))?;
        schedule.validate(&rm)?;
        let split = cfg.quant.is_some() && cfg.second_order == SecondOrderCombine::AdderDividerSplit;
        let plans: Vec<CombinePlan> = schedule
            .groups
            .iter()
            .map(|g| match (split, schedule.lambda) {
                (true, Some(lambda)) => Ok(CombinePlan::split(cfg.m, lambda, &g.cols)),
                (true, None) => {
                    Err(Error::Config("the adder/divider split needs a schedule with a latency budget".into()))
                }
                (false, _) => Ok(CombinePlan::exact(&g.cols)),
            })
            .collect::<Result<_>>()?;
        let mut rows: Vec<(usize, usize)> =
            schedule.groups.iter().enumerate().flat_map(|(gi, g)| g.rows.iter().map(move |&j| (j, gi))).collect();
        rows.sort_unstable();
        Ok(IupaDecoder { top: line_tables(cfg.m)?, inner: line_tables(cfg.m - 1)?, cfg, schedule, rows, plans })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn schedule(&self) -> &IupaSchedule {
        &self.schedule
    }

    pub fn fods_per_iteration(&self) -> usize {
        self.schedule.fods_per_iteration()
    }

    pub fn decode(&self, llr: &LlrVector) -> Result<Decoded> {
        self.cfg.check_input(llr)?;
        Ok(match llr {
            LlrVector::Real(v) => self.run(v, f64::unbounded(), real_chunk),
            LlrVector::Fixed { raw, format } => self.run(raw, q_limits(*format), fixed_chunk),
        })
    }

    fn run<T: Arith>(
        &self,
        input: &[T],
        lim: Limits<T>,
        chunk: impl Fn(&mut [Vec<T::Acc>], &mut Vec<i64>, u32, &mut [T::Acc]) + Copy,
    ) -> Decoded {
        let n = input.len();
        // one slot per top-level row plus the all-zero dummy
        let slots = n / 2;
        let mut buf = vec![T::Acc::default(); n * slots];
        let mut s = GroupScratch::<T>::new();
        iterate(&self.cfg, input, |l, next| {
            let mut calls = 0;
            for (slot, &(j, gi)) in self.rows.iter().enumerate() {
                let table = &self.top[j - 1];
                s.l2.resize(n / 2, T::ZERO);
                minsum_pairs(l, table, lim, &mut s.l2);
                calls += second_order(&mut s, &self.plans[gi], &self.inner, lim, chunk);
                pre_aggregate_slot(l, &s.chat, table, j, slots, slot, &mut buf);
            }
            for z in 0..n {
                buf[z * slots + slots - 1] = T::Acc::default();
            }
            next.extend(buf.chunks_exact_mut(slots).map(|c| T::average(c, lim)));
            calls
        })
    }
}

/// Second-order decision for one projected vector `l2` (length `2^(m−1)`)
/// over the given 1-based columns. With `cfg.quant` set and the adder/divider
/// split selected, `lambda` sets the right-half cycle width.
pub fn second_order_group_decode(
    l2: &LlrVector,
    cols: &[usize],
    cfg: &DecoderConfig,
    lambda: Option<usize>,
) -> Result<Vec<u8>> {
    check_len(cfg.n() / 2, l2.len())?;
    let half = l2.len();
    if let Some(&k) = cols.iter().find(|&&k| k == 0 || k >= half) {
        return Err(Error::Domain(format!("column {k} outside 1..{half}")));
    }
    let tables = line_tables(cfg.m - 1)?;
    let plan = match (cfg.quant.is_some() && cfg.second_order == SecondOrderCombine::AdderDividerSplit, lambda) {
        (true, Some(lam)) => CombinePlan::split(cfg.m, lam, cols),
        (true, None) => return Err(Error::Config("the adder/divider split needs lambda".into())),
        (false, _) => CombinePlan::exact(cols),
    };
    Ok(match l2 {
        LlrVector::Real(v) => {
            let mut s = GroupScratch::<f64>::new();
            s.l2 = v.clone();
            second_order(&mut s, &plan, &tables, f64::unbounded(), real_chunk);
            s.chat
        }
        LlrVector::Fixed { raw, format } => {
            let mut s = GroupScratch::<i32>::new();
            s.l2 = raw.clone();
            second_order(&mut s, &plan, &tables, q_limits(*format), fixed_chunk);
            s.chat
        }
    })
}

/// Convenience wrapper: builds an [`IupaDecoder`] and decodes one vector.
pub fn iupa_decode(llr: &LlrVector, sched: &IupaSchedule, cfg: &DecoderConfig) -> Result<Decoded> {
    IupaDecoder::new(cfg.clone(), sched.clone())?.decode(llr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{build_ilp, derive_schedule, ideal_schedule, solve_ilp, SolveOptions};
    use crate::fixed::QFormat;
    use crate::gf2::two_binomial;
    use crate::pa::IpaDecoder;
    use crate::rm::RmCode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ilp_schedule(m: u32, g: usize, lambda: usize) -> IupaSchedule {
        let rm = build_redundancy_matrix(m).unwrap();
        let model = build_ilp(&rm, g, lambda).unwrap();
        let opts = SolveOptions { time_limit: std::time::Duration::from_secs(60), node_limit: Some(100_000) };
        derive_schedule(&solve_ilp(&model, opts).unwrap(), &rm).unwrap()
    }

    fn codeword(code: &RmCode, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let u: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
        code.encode(&u).unwrap()
    }

    fn bpsk(c: &[u8], a: f64) -> Vec<f64> {
        c.iter().map(|&b| if b == 0 { a } else { -a }).collect()
    }

    #[test]
    fn plan_split_widths() {
        let right: Vec<usize> = (16..32).collect();
        let p = CombinePlan::split(6, 4, &[1, 3].iter().copied().chain(right.iter().copied()).collect::<Vec<_>>());
        assert_eq!(p.exact, vec![1, 3]);
        assert_eq!(p.chunks.len(), 4);
        assert_eq!(p.chunks[0], vec![16, 17, 18, 19]);
        assert_eq!(p.shift, 2);
        let p = CombinePlan::split(6, 16, &right);
        assert_eq!((p.chunks.len(), p.shift), (16, 0));
    }

    #[test]
    fn noiseless_decodes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for m in [5u32, 6] {
            let code = RmCode::new(m, 3).unwrap();
            let rm = build_redundancy_matrix(m).unwrap();
            let dec = IupaDecoder::new(DecoderConfig::new(m, 3), ideal_schedule(&rm)).unwrap();
            assert_eq!(dec.fods_per_iteration() as u128, two_binomial(m, 2).unwrap());
            for _ in 0..5 {
                let c = codeword(&code, &mut rng);
                let out = dec.decode(&LlrVector::Real(bpsk(&c, 1.0))).unwrap();
                assert_eq!((out.codeword, out.iterations), (c, 1));
            }
        }
    }

    #[test]
    fn ilp_schedules_decode_noiseless_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let code = RmCode::new(5, 3).unwrap();
        for (g, lambda) in [(2, 2), (4, 2)] {
            let sched = ilp_schedule(5, g, lambda);
            let mut cfg = DecoderConfig::new(5, 3);
            let real = IupaDecoder::new(cfg.clone(), sched.clone()).unwrap();
            cfg.quant = Some(QFormat::Q3_2);
            cfg.second_order = SecondOrderCombine::AdderDividerSplit;
            let fixed = IupaDecoder::new(cfg, sched).unwrap();
            for _ in 0..5 {
                let c = codeword(&code, &mut rng);
                let l = bpsk(&c, 2.0);
                assert_eq!(real.decode(&LlrVector::Real(l.clone())).unwrap().codeword, c);
                assert_eq!(fixed.decode(&LlrVector::quantized(&l, QFormat::Q3_2)).unwrap().codeword, c);
            }
        }
    }

    #[test]
    fn full_column_set_matches_ipa_sweep() {
        // One second-order decode over every column equals the sweep the
        // r = 3 IPA decoder runs for each top-level projection.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.5, 1.0).unwrap();
        let cfg = DecoderConfig::new(6, 3);
        let tables = line_tables(5).unwrap();
        for _ in 0..50 {
            let l2: Vec<f64> = (0..32).map(|_| normal.sample(&mut rng)).collect();
            let cols: Vec<usize> = (1..32).collect();
            let got = second_order_group_decode(&LlrVector::Real(l2.clone()), &cols, &cfg, None).unwrap();
            let mut sweep = crate::pa::SecondOrderScratch::<f64>::new();
            sweep.l2 = l2;
            sweep.sweep_all(&tables, f64::unbounded());
            assert_eq!(got, sweep.chat);
        }
    }

    #[test]
    fn second_order_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let code = RmCode::new(5, 2).unwrap();
        let cfg = DecoderConfig::new(6, 3);
        for _ in 0..10 {
            let c = codeword(&code, &mut rng);
            let cols: Vec<usize> = (1..32).collect();
            let got = second_order_group_decode(&LlrVector::Real(bpsk(&c, 1.0)), &cols, &cfg, None).unwrap();
            assert_eq!(got, c);
        }
        assert!(second_order_group_decode(&LlrVector::Real(vec![0.0; 32]), &[32], &cfg, None).is_err());
    }

    #[test]
    fn fod_count_exceeds_unique_by_duplicates() {
        let rm = build_redundancy_matrix(5).unwrap();
        let sched = ilp_schedule(5, 2, 2);
        let extra: usize = sched.label_coverage(&rm).iter().map(|c| c - 1).sum();
        let dec = IupaDecoder::new(DecoderConfig::new(5, 3), sched).unwrap();
        assert_eq!(dec.fods_per_iteration(), 155 + extra);
        let out = dec.decode(&LlrVector::Real(vec![1.0; 32])).unwrap();
        assert_eq!(out.fod_calls, dec.fods_per_iteration() * out.iterations);
    }

    #[test]
    fn agrees_with_ipa_on_most_noisy_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let code = RmCode::new(5, 3).unwrap();
        let rm = build_redundancy_matrix(5).unwrap();
        let iupa = IupaDecoder::new(DecoderConfig::new(5, 3), ideal_schedule(&rm)).unwrap();
        let ipa = IpaDecoder::new(DecoderConfig::new(5, 3)).unwrap();
        let noise = Normal::new(0.0, 0.6).unwrap();
        let mut same = 0;
        for _ in 0..200 {
            let c = codeword(&code, &mut rng);
            let l: Vec<f64> = bpsk(&c, 1.0).iter().map(|x| x + noise.sample(&mut rng)).collect();
            let a = iupa.decode(&LlrVector::Real(l.clone())).unwrap().codeword;
            let b = ipa.decode(&LlrVector::Real(l)).unwrap().codeword;
            same += (a == b) as usize;
        }
        assert!(same >= 180, "{same}");
    }

    #[test]
    fn rejects_mismatched_schedule() {
        let rm = build_redundancy_matrix(5).unwrap();
        assert!(IupaDecoder::new(DecoderConfig::new(6, 3), ideal_schedule(&rm)).is_err());
        assert!(IupaDecoder::new(DecoderConfig::new(5, 2), ideal_schedule(&rm)).is_err());
        let mut cfg = DecoderConfig::new(5, 3).with_quant(Some(QFormat::Q3_2));
        cfg.second_order = SecondOrderCombine::AdderDividerSplit;
        assert!(IupaDecoder::new(cfg, ideal_schedule(&rm)).is_err());
    }
}
