//! BPSK over AWGN and the Monte Carlo frame-error-rate engine.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::IupaSchedule;
use crate::cpa::CpaDecoder;
use crate::error::{Error, Result};
use crate::fixed::QFormat;
use crate::iupa::IupaDecoder;
use crate::llr::LlrVector;
use crate::pa::{Decoded, DecoderConfig, IpaDecoder, Precision};
use crate::rm::RmCode;

/// Noise variance per real dimension for a given `Eb/N0` and code rate.
pub fn noise_variance(eb_n0_db: f64, rate: f64) -> f64 {
    1.0 / (2.0 * rate * 10f64.powf(eb_n0_db / 10.0))
}

/// How received samples are scaled before fixed-point quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "gain")]
pub enum FixedInput {
    /// Quantize the channel LLR `2y/σ²` itself.
    Llr,
    /// Quantize `gain · y`: a receiver with fixed gain, where the noiseless
    /// BPSK amplitude lands on `±gain`.
    Amplitude(f64),
}

impl Default for FixedInput {
    fn default() -> Self {
        FixedInput::Amplitude(2.0)
    }
}

impl FixedInput {
    /// Parses `llr` or `amp:<gain>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("llr") {
            return Ok(FixedInput::Llr);
        }
        s.strip_prefix("amp:")
            .and_then(|g| g.parse::<f64>().ok())
            .filter(|g| g.is_finite() && *g > 0.0)
            .map(FixedInput::Amplitude)
            .ok_or_else(|| Error::Config(format!("fixed-point input {s:?} is neither `llr` nor `amp:<gain>`")))
    }
}

impl std::fmt::Display for FixedInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FixedInput::Llr => write!(f, "llr"),
            FixedInput::Amplitude(g) => write!(f, "amp:{g}"),
        }
    }
}

/// Maps `c` to ±1 and adds Gaussian noise. Real mode returns the channel
/// LLRs `2y/σ²`; with `quant` set the samples are scaled per `input` and
/// quantized. The decoders are invariant to a positive scale of their
/// input, so only the fixed-point results depend on `input`.
pub fn modulate_and_llr<R: Rng + ?Sized>(
    c: &[u8],
    eb_n0_db: f64,
    rate: f64,
    quant: Option<QFormat>,
    input: FixedInput,
    rng: &mut R,
) -> LlrVector {
    let var = noise_variance(eb_n0_db, rate);
    let sigma = var.sqrt();
    let scale = match (quant, input) {
        (Some(_), FixedInput::Amplitude(g)) => g,
        _ => 2.0 / var,
    };
    let values: Vec<f64> = c
        .iter()
        .map(|&b| {
            let x = if b == 0 { 1.0 } else { -1.0 };
            let w: f64 = rng.sample(StandardNormal);
            scale * (x + sigma * w)
        })
        .collect();
    match quant {
        None => LlrVector::Real(values),
        Some(q) => LlrVector::quantized(&values, q),
    }
}

/// A configured decoder of any family.
#[derive(Debug, Clone)]
pub enum Decoder {
    Ipa(IpaDecoder),
    Iupa(IupaDecoder),
    Cpa(CpaDecoder),
}

impl Decoder {
    pub fn ipa(cfg: DecoderConfig) -> Result<Self> {
        Ok(Decoder::Ipa(IpaDecoder::new(cfg)?))
    }

    pub fn iupa(cfg: DecoderConfig, schedule: IupaSchedule) -> Result<Self> {
        Ok(Decoder::Iupa(IupaDecoder::new(cfg, schedule)?))
    }

    pub fn cpa(cfg: DecoderConfig) -> Result<Self> {
        Ok(Decoder::Cpa(CpaDecoder::new(cfg)?))
    }

    pub fn config(&self) -> &DecoderConfig {
        match self {
            Decoder::Ipa(d) => d.config(),
            Decoder::Iupa(d) => d.config(),
            Decoder::Cpa(d) => d.config(),
        }
    }

    pub fn decode(&self, llr: &LlrVector) -> Result<Decoded> {
        match self {
            Decoder::Ipa(d) => d.decode(llr),
            Decoder::Iupa(d) => d.decode(llr),
            Decoder::Cpa(d) => d.decode(llr),
        }
    }

    pub fn fods_per_iteration(&self) -> usize {
        match self {
            Decoder::Ipa(d) => d.fods_per_iteration(),
            Decoder::Iupa(d) => d.fods_per_iteration(),
            Decoder::Cpa(d) => d.num_projections(),
        }
    }

    /// `ipa`, `iupa` or `cpa`.
    pub fn id(&self) -> &'static str {
        match self {
            Decoder::Ipa(_) => "ipa",
            Decoder::Iupa(_) => "iupa",
            Decoder::Cpa(_) => "cpa",
        }
    }

    /// Schedule id for IUPA, `-` otherwise.
    pub fn schedule_id(&self) -> String {
        match self {
            Decoder::Iupa(d) => d.schedule().id(),
            _ => "-".into(),
        }
    }

    /// Arithmetic label: `float`, `Q(3:2)`, or for fixed-point CPA the
    /// format followed by the adder policies, e.g. `Q(3:2)/AT:FP,Acc:Sat`.
    pub fn quant_id(&self) -> String {
        let cfg = self.config();
        let Some(q) = cfg.quant else { return "float".into() };
        let name = |p: Precision| match p {
            Precision::Full => "FP",
            Precision::Sat => "Sat",
        };
        match self {
            Decoder::Cpa(_) => format!("{q}/AT:{},Acc:{},p={}", name(cfg.cpa.tree), name(cfg.cpa.acc), cfg.cpa.p),
            _ => q.to_string(),
        }
    }
}

/// When a simulation point ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_frames: u64,
    pub min_errors: u64,
    /// Stops regardless of `min_frames` once this many errors are seen.
    pub max_errors: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { min_frames: 100_000, min_errors: 100, max_errors: 1000, max_frames: u64::MAX }
    }
}

impl StopRule {
    pub fn done(&self, frames: u64, errors: u64) -> bool {
        (frames >= self.min_frames && errors >= self.min_errors)
            || errors >= self.max_errors
            || frames >= self.max_frames
    }
}

/// One Monte Carlo experiment: a decoder swept over several `Eb/N0` points.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub decoder: Decoder,
    pub ebn0_db: Vec<f64>,
    pub seed: u64,
    pub stop: StopRule,
    /// Worker threads; `0` uses all available cores.
    pub workers: usize,
    /// Frames simulated between stop-rule checks.
    pub batch: usize,
    pub fixed_input: FixedInput,
}

impl Experiment {
    pub fn new(decoder: Decoder, ebn0_db: Vec<f64>, seed: u64) -> Self {
        Experiment {
            decoder,
            ebn0_db,
            seed,
            stop: StopRule::default(),
            workers: 0,
            batch: 4096,
            fixed_input: FixedInput::default(),
        }
    }
}

/// One simulated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FerRecord {
    pub m: u32,
    pub r: u32,
    pub decoder: String,
    pub schedule: String,
    pub quant: String,
    pub nmax: usize,
    pub ebn0_db: f64,
    pub frames: u64,
    pub errors: u64,
    pub fer: f64,
    pub seed: u64,
    pub wall_time: f64,
}

impl FerRecord {
    pub const CSV_HEADER: &'static str = "m,r,decoder,schedule,quant,nmax,ebn0_db,frames,errors,fer,seed";

    /// One CSV line without the trailing newline. Wall time is left out so
    /// that reruns produce identical files.
    pub fn csv_line(&self) -> String {
        let field = |s: &str| if s.contains(',') { format!("\"{s}\"") } else { s.to_string() };
        format!(
            "{},{},{},{},{},{},{:.2},{},{},{:.6e},{}",
            self.m,
            self.r,
            field(&self.decoder),
            field(&self.schedule),
            field(&self.quant),
            self.nmax,
            self.ebn0_db,
            self.frames,
            self.errors,
            self.fer,
            self.seed
        )
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    /// Wilson score interval for the frame error rate at normal quantile `z`.
    pub fn confidence_interval(&self, z: f64) -> (f64, f64) {
        wilson_interval(self.errors, self.frames, z)
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Writes records as CSV with header.
pub fn to_csv(records: &[FerRecord]) -> String {
    let mut s = String::from(FerRecord::CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

/// Writes records as JSON lines.
pub fn to_jsonl(records: &[FerRecord]) -> String {
    records.iter().map(|r| r.json_line() + "\n").collect()
}

/// Per-frame generator: stream `frame` of the ChaCha8 generator keyed by
/// `seed`. The same frame index sees the same message and noise at every
/// `Eb/N0` point and for every decoder.
pub fn frame_rng(seed: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame);
    rng
}

/// Simulates one frame; returns whether it was decoded in error.
pub fn simulate_frame(
    code: &RmCode,
    decoder: &Decoder,
    eb_n0_db: f64,
    input: FixedInput,
    seed: u64,
    frame: u64,
) -> Result<bool> {
    let mut rng = frame_rng(seed, frame);
    let u: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
    let c = code.encode(&u)?;
    let llr = modulate_and_llr(&c, eb_n0_db, code.rate(), decoder.config().quant, input, &mut rng);
    Ok(decoder.decode(&llr)?.codeword != c)
}

/// Runs every point of the experiment. Results do not depend on the
/// number of workers.
pub fn run_fer(exp: &Experiment) -> Result<Vec<FerRecord>> {
    run_fer_with(exp, |_| {})
}

/// Like [`run_fer`], calling `progress` after each finished point.
pub fn run_fer_with(exp: &Experiment, mut progress: impl FnMut(&FerRecord)) -> Result<Vec<FerRecord>> {
    if exp.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if exp.ebn0_db.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("Eb/N0 values must be finite".into()));
    }
    let cfg = exp.decoder.config();
    let code = RmCode::new(cfg.m, cfg.r)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut out = Vec::with_capacity(exp.ebn0_db.len());
    for &ebn0 in &exp.ebn0_db {
        let start = Instant::now();
        let (mut frames, mut errors) = (0u64, 0u64);
        'point: while !exp.stop.done(frames, errors) {
            let first = frames;
            let outcomes: Vec<bool> = pool.install(|| {
                (first..first + exp.batch as u64)
                    .into_par_iter()
                    .map(|f| simulate_frame(&code, &exp.decoder, ebn0, exp.fixed_input, exp.seed, f))
                    .collect::<Result<_>>()
            })?;
            for e in outcomes {
                frames += 1;
                errors += e as u64;
                if exp.stop.done(frames, errors) {
                    break 'point;
                }
            }
        }
        let rec = FerRecord {
            m: cfg.m,
            r: cfg.r,
            decoder: exp.decoder.id().into(),
            schedule: exp.decoder.schedule_id(),
            quant: exp.decoder.quant_id(),
            nmax: cfg.n_max,
            ebn0_db: ebn0,
            frames,
            errors,
            fer: errors as f64 / frames.max(1) as f64,
            seed: exp.seed,
            wall_time: start.elapsed().as_secs_f64(),
        };
        progress(&rec);
        out.push(rec);
    }
    Ok(out)
}

/// `start:stop:step` in dB, both ends inclusive.
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Err(Error::Config(format!("invalid SNR range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}
