//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::{BTreeSet, HashMap};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmpa::allocation::{
    build_ilp, build_redundancy_matrix, derive_schedule, ideal_schedule, solve_ilp, IupaSchedule, SolveOptions,
};
use rmpa::channel::{run_fer, to_csv, Decoder, Experiment, FerRecord, StopRule};
use rmpa::cpa::{coset_min_stats, cpa_pre_aggregate, cpa_project, CpaDecoder};
use rmpa::fht::first_order_decode;
use rmpa::fixed::QFormat;
use rmpa::gf2::{coset_table, enumerate_subspaces, CosetTable};
use rmpa::hw::{cpa_model, iupa_model};
use rmpa::llr::LlrVector;
use rmpa::pa::{minsum_project_1d, CpaArithmetic, DecoderConfig, IpaDecoder, Precision};
use rmpa::rm::{binary_project, RmCode};

const SEED: u64 = 1;

fn solve_options() -> SolveOptions {
    SolveOptions { time_limit: Duration::from_secs(600), node_limit: Some(2_000_000) }
}

struct Outcome {
    pass: bool,
    lines: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { pass: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: String) {
        self.pass &= ok;
        self.lines.push(format!("{} {msg}", if ok { "ok  " } else { "MISS" }));
    }
}

fn errors_budget(errors: u64) -> StopRule {
    StopRule { min_frames: 0, min_errors: errors, max_errors: errors, max_frames: u64::MAX }
}

fn fer(decoder: Decoder, ebn0: &[f64], errors: u64) -> Vec<FerRecord> {
    let mut exp = Experiment::new(decoder, ebn0.to_vec(), SEED);
    exp.stop = errors_budget(errors);
    run_fer(&exp).expect("simulation runs")
}

fn rel_check(out: &mut Outcome, label: &str, rec: &FerRecord, target: f64, tol: f64) {
    let dev = rec.fer / target - 1.0;
    out.check(
        dev.abs() <= tol,
        format!(
            "{label} @ {:.2} dB: FER {:.3e} ({} errors / {} frames) vs {:.3e}, {:+.1}% (limit ±{:.0}%)",
            rec.ebn0_db,
            rec.fer,
            rec.errors,
            rec.frames,
            target,
            dev * 100.0,
            tol * 100.0
        ),
    );
}

fn ilp_schedule(m: u32, g: usize, lambda: usize) -> IupaSchedule {
    let rm = build_redundancy_matrix(m).unwrap();
    let model = build_ilp(&rm, g, lambda).unwrap();
    let assign = solve_ilp(&model, solve_options()).unwrap();
    derive_schedule(&assign, &rm).unwrap()
}

fn float_cfg(m: u32, n_max: usize) -> DecoderConfig {
    DecoderConfig::new(m, 3).with_n_max(n_max)
}

fn c1_float_iupa() -> Outcome {
    let mut out = Outcome::new();
    let rm = build_redundancy_matrix(6).unwrap();
    let dec = Decoder::iupa(float_cfg(6, 3), ideal_schedule(&rm)).unwrap();
    let recs = fer(dec, &[4.0, 4.25, 4.5], 300);
    for (rec, target) in recs.iter().zip([2.69e-3, 1.22e-3, 5.99e-4]) {
        rel_check(&mut out, "IUPA RM(6,3) N=3", rec, target, 0.15);
        out.check(rec.errors >= 100, format!("{} frame errors (need >= 100)", rec.errors));
    }
    out
}

fn c2_family() -> Outcome {
    let mut out = Outcome::new();
    let rm = build_redundancy_matrix(6).unwrap();
    let cfg = DecoderConfig::new(6, 3);
    let decoders = [
        Decoder::ipa(cfg.clone()).unwrap(),
        Decoder::cpa(cfg.clone()).unwrap(),
        Decoder::iupa(cfg.clone(), ideal_schedule(&rm)).unwrap(),
        Decoder::iupa(cfg.clone(), ilp_schedule(6, 2, 4)).unwrap(),
    ];
    let mut by_point: HashMap<String, Vec<(String, (f64, f64))>> = HashMap::new();
    for dec in decoders {
        let name = format!("{}:{}", dec.id(), dec.schedule_id());
        for rec in fer(dec, &[3.5, 4.0], 150) {
            let ci = rec.confidence_interval(1.96);
            out.lines.push(format!(
                "     {name} @ {:.2} dB: FER {:.3e} [{:.3e}, {:.3e}] ({} / {})",
                rec.ebn0_db, rec.fer, ci.0, ci.1, rec.errors, rec.frames
            ));
            by_point.entry(format!("{:.2}", rec.ebn0_db)).or_default().push((name.clone(), ci));
        }
    }
    let mut points: Vec<_> = by_point.into_iter().collect();
    points.sort_by(|a, b| a.0.cmp(&b.0));
    for (snr, entries) in points {
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let (a, ca) = &entries[i];
                let (b, cb) = &entries[j];
                let overlap = ca.0 <= cb.1 && cb.0 <= ca.1;
                out.check(overlap, format!("{snr} dB: 95% intervals of {a} and {b} overlap"));
            }
        }
    }
    out
}

fn c3_iterations() -> Outcome {
    let mut out = Outcome::new();
    let rm = build_redundancy_matrix(7).unwrap();
    for (n, target) in [(1, 6.77e-2), (2, 4.26e-3), (3, 3.06e-3)] {
        let dec = Decoder::iupa(float_cfg(7, n), ideal_schedule(&rm)).unwrap();
        let rec = &fer(dec, &[3.0], 300)[0];
        rel_check(&mut out, &format!("IUPA RM(7,3) N={n}"), rec, target, 0.15);
    }
    out
}

fn c4_quantization() -> Outcome {
    let mut out = Outcome::new();
    let q = QFormat::parse("Q(3:2)").unwrap();
    let rm = build_redundancy_matrix(6).unwrap();
    let fixed = DecoderConfig::new(6, 3).with_n_max(2).with_quant(Some(q));
    let iupa = Decoder::iupa(fixed.clone(), ideal_schedule(&rm)).unwrap();
    rel_check(&mut out, "IUPA Q(3:2) FP adds", &fer(iupa, &[4.0], 300)[0], 3.33e-3, 0.20);
    for (tree, label, target) in
        [(Precision::Sat, "CPA Q(3:2) AT:Sat,Acc:Sat", 5.56e-3), (Precision::Full, "CPA Q(3:2) AT:FP,Acc:Sat", 3.69e-3)]
    {
        let mut cfg = fixed.clone();
        cfg.cpa = CpaArithmetic::new(7, tree, Precision::Sat);
        let dec = Decoder::cpa(cfg).unwrap();
        rel_check(&mut out, label, &fer(dec, &[4.0], 300)[0], target, 0.20);
    }
    out
}

/// All 2-D subspaces of F2^m as sorted element sets, by brute force.
fn brute_planes(m: u32) -> BTreeSet<[u32; 4]> {
    let n = 1u32 << m;
    let mut set = BTreeSet::new();
    for a in 1..n {
        for b in a + 1..n {
            let mut s = [0, a, b, a ^ b];
            s.sort();
            set.insert(s);
        }
    }
    set
}

fn c5_counts() -> Outcome {
    let mut out = Outcome::new();
    for (m, ipa_fods, unique) in [(5u32, 465usize, 155usize), (6, 1953, 651)] {
        let lines = (1usize << m) - 1;
        let chains = lines * ((1usize << (m - 1)) - 1);
        let planes = brute_planes(m).len();
        let cfg = DecoderConfig::new(m, 3);
        let ipa = IpaDecoder::new(cfg.clone()).unwrap().fods_per_iteration();
        let cpa = CpaDecoder::new(cfg).unwrap().num_projections();
        let rm = build_redundancy_matrix(m).unwrap();
        let labels = rm.num_labels();
        let ideal = ideal_schedule(&rm).fods_per_iteration();
        out.check(
            ipa == ipa_fods && chains == ipa_fods,
            format!("RM({m},3) IPA first-order decodings {ipa} (oracle {chains}, expected {ipa_fods})"),
        );
        out.check(
            labels == unique && planes == unique && ideal == unique,
            format!("RM({m},3) unique labels {labels}, ideal schedule {ideal} (oracle {planes}, expected {unique})"),
        );
        out.check(cpa == unique, format!("RM({m},3) CPA projections {cpa} = {unique}"));
        out.check(3 * unique == ipa, format!("RM({m},3) ratio {unique}/{ipa} = 1/3"));
    }
    out
}

fn c6_ilp() -> Outcome {
    let mut out = Outcome::new();
    let cases: [(u32, usize, usize, Option<usize>, Option<usize>); 5] = [
        (6, 2, 8, Some(6), None),
        (6, 2, 4, Some(12), None),
        (6, 2, 2, Some(24), None),
        (5, 2, 2, None, Some(25)),
        (5, 4, 2, None, Some(3)),
    ];
    for (m, g, lambda, max_pus, max_dups) in cases {
        let rm = build_redundancy_matrix(m).unwrap();
        let model = build_ilp(&rm, g, lambda).unwrap();
        let t = Instant::now();
        let assign = solve_ilp(&model, solve_options()).unwrap();
        let secs = t.elapsed().as_secs_f64();
        out.check(
            t.elapsed() <= Duration::from_secs(600),
            format!("RM({m},3) G={g} λ={lambda}: solved in {secs:.1} s"),
        );
        let verified = assign.verify(&model);
        out.check(verified.is_ok(), format!("RM({m},3) G={g} λ={lambda}: verifier {verified:?}"));
        let sched = derive_schedule(&assign, &rm).unwrap();
        out.check(sched.validate(&rm).is_ok(), format!("RM({m},3) G={g} λ={lambda}: schedule covers every label"));
        if let Some(limit) = max_pus {
            let total = assign.total_pus();
            out.check(total <= limit, format!("RM({m},3) G={g} λ={lambda}: {total} PUs (limit {limit})"));
        }
        if let Some(limit) = max_dups {
            let d = assign.duplicate_count;
            out.check(d <= limit, format!("RM({m},3) G={g} λ={lambda}: {d} duplicates (limit {limit})"));
        }
    }
    out
}

fn c7_hw() -> Outcome {
    let mut out = Outcome::new();
    // (m, G, λ, f, table latency for two iterations, table throughput)
    let iupa = [
        (6, 2, 8, 714.0, 294, 357.0),
        (6, 2, 4, 714.0, 164, 714.0),
        (6, 4, 8, 714.0, 170, 714.0),
        (6, 2, 2, 714.0, 98, 1428.0),
        (7, 2, 16, 625.0, 1072, 156.0),
        (7, 2, 8, 625.0, 552, 312.0),
        (7, 2, 4, 625.0, 292, 625.0),
    ];
    for (m, g, l, f, lat, thr) in iupa {
        let e = iupa_model(m, g, l, f, None, 2).unwrap();
        let exact = m == 6;
        let thr_ok = if exact { e.throughput_mbps == thr } else { (e.throughput_mbps - thr).abs() <= 1.0 };
        out.check(thr_ok, format!("IUPA RM({m},3) ({g},{l}): {:.2} Mbps vs {thr}", e.throughput_mbps));
        let diff = e.latency_cc as i64 - lat;
        out.check(diff.abs() <= 4, format!("IUPA RM({m},3) ({g},{l}): {} cc vs {lat} ({diff:+})", e.latency_cc));
    }
    let p6 = iupa_model(6, 2, 2, 714.0, None, 1).unwrap().latency_cc_per_iter;
    let p7 = iupa_model(7, 2, 4, 625.0, None, 1).unwrap().latency_cc_per_iter;
    out.check(p6 == 47, format!("RM(6,3) 24-PU latency point {p6} cc (expected 47)"));
    out.check(p7 == 146, format!("RM(7,3) 24-PU latency point {p7} cc (expected 146)"));
    let cpa =
        [(6, 7, 500.0, 202, 344.0), (6, 21, 500.0, 78, 1032.0), (7, 7, 465.0, 778, 156.0), (7, 21, 465.0, 272, 469.0)];
    for (m, p, f, lat, thr) in cpa {
        let e = cpa_model(m, 3, p, f, None, None, 2).unwrap();
        out.check(
            (e.throughput_mbps - thr).abs() <= 1.0,
            format!("CPA RM({m},3) p={p}: {:.2} Mbps vs {thr}", e.throughput_mbps),
        );
        let diff = e.latency_cc as i64 - lat;
        out.check(diff.abs() <= 4, format!("CPA RM({m},3) p={p}: {} cc vs {lat} ({diff:+})", e.latency_cc));
    }
    out
}

fn random_llr(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-4.0..4.0)).collect()
}

/// Exhaustive ML over RM(m, 1): maximises the correlation with `(−1)^c`.
fn ml_first_order(llr: &[f64]) -> Vec<u8> {
    let n = llr.len();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for k in 0..n {
        for s in 0..2u8 {
            let c: Vec<u8> = (0..n).map(|z| (((k & z).count_ones() & 1) as u8) ^ s).collect();
            let corr: f64 = c.iter().zip(llr).map(|(b, l)| if *b == 0 { *l } else { -*l }).sum();
            if corr > best.0 {
                best = (corr, c);
            }
        }
    }
    best.1
}

/// Coset of `z` under `table`'s subspace, computed from its span.
fn coset_members(z: u32, table: &CosetTable) -> Vec<u32> {
    table.subspace().span().iter().map(|b| z ^ b).collect()
}

/// Algebraic degree of a Boolean function given by its truth table.
fn anf_degree(f: &[u8]) -> u32 {
    let mut a = f.to_vec();
    let mut h = 1;
    while h < a.len() {
        for i in 0..a.len() {
            if i & h != 0 {
                a[i] ^= a[i ^ h];
            }
        }
        h <<= 1;
    }
    a.iter().enumerate().filter(|(_, v)| **v == 1).map(|(i, _)| (i as u32).count_ones()).max().unwrap_or(0)
}

fn c8_oracles() -> Outcome {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut mismatches = 0;
    for trial in 0..1000 {
        let mp = 1 + trial % 4;
        let llr = random_llr(1 << mp, &mut rng);
        let fht = first_order_decode(&LlrVector::Real(llr.clone())).unwrap().codeword;
        mismatches += usize::from(fht != ml_first_order(&llr));
    }
    out.check(mismatches == 0, format!("FHT vs exhaustive ML, m' = 1..4, 1000 vectors: {mismatches} mismatches"));

    let mut mismatches = 0;
    let mut checked = 0;
    for (m, d) in [(5u32, 2u32), (6, 2), (5, 1), (6, 3)] {
        for sub in enumerate_subspaces(m, d).unwrap().iter().take(40) {
            let table = coset_table(sub);
            let llr = random_llr(1 << m, &mut rng);
            let decoded: Vec<u8> = (0..table.num_cosets()).map(|_| rng.random_range(0..2)).collect();
            let stats = coset_min_stats(&llr, &table).unwrap();
            let got = cpa_pre_aggregate(&llr, &stats, &decoded, &table).unwrap();
            for z in 0..llr.len() as u32 {
                let others: Vec<f64> =
                    coset_members(z, &table).into_iter().filter(|&w| w != z).map(|w| llr[w as usize]).collect();
                let sign: f64 = others.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).product();
                let mag = others.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
                let flip = if decoded[table.coset_of(z) as usize] == 1 { -1.0 } else { 1.0 };
                mismatches += usize::from(got[z as usize] != flip * sign * mag);
                checked += 1;
            }
        }
    }
    out.check(
        mismatches == 0,
        format!("CPA pre-aggregation vs leave-one-out min-sum: {mismatches} of {checked} coordinates differ"),
    );

    let mut sign_mismatch = 0;
    let mut not_codeword = 0;
    let mut degree_over = 0;
    let mut projections = 0;
    for (m, r) in [(4u32, 2u32), (5, 2), (5, 3), (6, 3)] {
        let code = RmCode::new(m, r).unwrap();
        let sub_code = RmCode::new(m - 1, r - 1).unwrap();
        for _ in 0..10 {
            let u: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2)).collect();
            let c = code.encode(&u).unwrap();
            let llr: Vec<f64> =
                c.iter().map(|b| rng.random_range(0.5..3.0) * if *b == 0 { 1.0 } else { -1.0 }).collect();
            for d in 1..r {
                for sub in enumerate_subspaces(m, d).unwrap() {
                    let table = coset_table(&sub);
                    let proj = binary_project(&c, &table).unwrap();
                    for z in 0..c.len() as u32 {
                        let x = coset_members(z, &table).iter().fold(0, |a, &w| a ^ c[w as usize]);
                        sign_mismatch += usize::from(x != proj[table.coset_of(z) as usize]);
                    }
                    let minsum: Vec<f64> = if d == 1 {
                        minsum_project_1d(&LlrVector::Real(llr.clone()), &table).unwrap().to_real()
                    } else {
                        cpa_project(&coset_min_stats(&llr, &table).unwrap())
                    };
                    let hard: Vec<u8> = minsum.iter().map(|v| u8::from(*v < 0.0)).collect();
                    sign_mismatch += usize::from(hard != proj);
                    if d == 1 {
                        not_codeword += usize::from(!sub_code.is_codeword(&proj));
                        degree_over += usize::from(anf_degree(&proj) > r - 1);
                    }
                    projections += 1;
                }
            }
        }
    }
    out.check(
        sign_mismatch == 0,
        format!("min-sum signs vs binary projection over {projections} projections: {sign_mismatch} mismatches"),
    );
    out.check(
        not_codeword == 0 && degree_over == 0,
        format!(
            "1-D binary projections in RM(m-1,r-1): {not_codeword} rejected by is_codeword, {degree_over} over degree"
        ),
    );
    out
}

fn c9_determinism() -> Outcome {
    let mut out = Outcome::new();
    let rm = build_redundancy_matrix(5).unwrap();
    let q = QFormat::parse("Q(3:2)").unwrap();
    let decoders = [
        Decoder::iupa(DecoderConfig::new(5, 3), ideal_schedule(&rm)).unwrap(),
        Decoder::cpa(DecoderConfig::new(5, 3).with_quant(Some(q))).unwrap(),
    ];
    for dec in decoders {
        let name = format!("{} {}", dec.id(), dec.quant_id());
        let mut csv = Vec::new();
        for (workers, batch) in [(1, 4096), (2, 100), (4, 7)] {
            let mut exp = Experiment::new(dec.clone(), vec![2.0, 3.0], 11);
            exp.stop = StopRule { min_frames: 3000, min_errors: 20, max_errors: 200, max_frames: 20_000 };
            exp.workers = workers;
            exp.batch = batch;
            csv.push(to_csv(&run_fer(&exp).unwrap()));
        }
        let same = csv.windows(2).all(|w| w[0] == w[1]);
        out.check(same, format!("{name}: CSV identical for 1, 2 and 4 workers ({} bytes)", csv[0].len()));
    }
    out
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("float IUPA FER, RM(6,3)", c1_float_iupa),
        ("decoder family equivalence", c2_family),
        ("iteration study, RM(7,3)", c3_iterations),
        ("Q(3:2) quantization", c4_quantization),
        ("combinatorial counts", c5_counts),
        ("ILP allocation", c6_ilp),
        ("hardware model", c7_hw),
        ("oracle equivalences", c8_oracles),
        ("determinism across workers", c9_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut summary = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let t = Instant::now();
        let outcome = run();
        for line in &outcome.lines {
            println!("  [{id}] {line}");
        }
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        let line = format!("{status} criterion {id}: {name} ({:.1} s)", t.elapsed().as_secs_f64());
        println!("{line}");
        summary.push((outcome.pass, line));
    }
    println!();
    for (_, line) in &summary {
        println!("{line}");
    }
    if summary.iter().all(|(p, _)| *p) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
