use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmpa::allocation::{
    build_ilp, build_redundancy_matrix, derive_schedule, export_lp, ideal_schedule, solve_ilp, IupaSchedule,
    SolveOptions,
};
use rmpa::channel::{run_fer_with, snr_grid, to_csv, to_jsonl, Decoder, Experiment, FixedInput, StopRule};
use rmpa::fixed::QFormat;
use rmpa::hw::{cpa_model, iupa_model};
use rmpa::llr::LlrVector;
use rmpa::pa::{CpaArithmetic, DecoderConfig, Handoff, Precision, SecondOrderCombine};
use rmpa::rm::RmCode;

/// Projection-aggregation decoding of Reed-Muller codes
#[derive(Parser, Debug)]
#[command(name = "rmpa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo frame error rate over BPSK/AWGN
    Sim(SimArgs),
    /// Solve the projection allocation and write the IUPA schedule as JSON
    Allocate(AllocateArgs),
    /// Write the projection allocation model in LP format
    ExportLp(ExportLpArgs),
    /// Throughput and latency of the hardware architectures
    Hwmodel {
        #[command(subcommand)]
        arch: HwArch,
    },
    /// Encode or decode a single vector
    Codec {
        #[command(subcommand)]
        op: CodecOp,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecoderKind {
    Ipa,
    Iupa,
    Cpa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Adder {
    Fp,
    Sat,
}

impl From<Adder> for Precision {
    fn from(a: Adder) -> Self {
        match a {
            Adder::Fp => Precision::Full,
            Adder::Sat => Precision::Sat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HandoffArg {
    Saturate,
    Rescale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SecondOrderArg {
    Exact,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    /// Use the duplicate-free schedule (one group per top-level projection)
    #[arg(long, conflicts_with_all = ["schedule", "groups", "lambda"])]
    ideal: bool,

    /// Schedule JSON written by `allocate`
    #[arg(long, conflicts_with_all = ["groups", "lambda"])]
    schedule: Option<PathBuf>,

    /// Number of second-order decoder groups
    #[arg(short = 'G', long = "groups", requires = "lambda")]
    groups: Option<usize>,

    /// Latency budget in cycles per first-order decoder
    #[arg(long, requires = "groups")]
    lambda: Option<usize>,

    /// Wall-clock limit for the allocation search, in seconds
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,

    /// Node limit for the allocation search
    #[arg(long, default_value_t = 2_000_000)]
    node_limit: u64,
}

#[derive(Args, Debug)]
struct DecoderArgs {
    /// Code parameters `m,r`
    #[arg(long, value_parser = parse_code)]
    code: (u32, u32),

    #[arg(long, value_enum)]
    decoder: DecoderKind,

    #[command(flatten)]
    schedule: ScheduleArgs,

    /// Maximum number of iterations [default: ceil(m/2)]
    #[arg(long)]
    nmax: Option<usize>,

    /// Always run `nmax` iterations
    #[arg(long)]
    no_early_stop: bool,

    /// Fixed-point format such as `Q(3:2)`; real arithmetic when absent
    #[arg(long, value_parser = parse_quant)]
    quant: Option<QFormat>,

    /// Fixed-point second-order combining for IUPA
    #[arg(long, value_enum, default_value_t = SecondOrderArg::Exact)]
    second_order: SecondOrderArg,

    /// CPA contributions per cycle
    #[arg(short, default_value_t = 7)]
    p: usize,

    /// CPA adder tree precision
    #[arg(long, value_enum, default_value_t = Adder::Fp)]
    tree: Adder,

    /// CPA accumulator precision
    #[arg(long, value_enum, default_value_t = Adder::Sat)]
    acc: Adder,

    /// CPA accumulator narrowing between iterations
    #[arg(long, value_enum, default_value_t = HandoffArg::Rescale)]
    handoff: HandoffArg,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(flatten)]
    decoder: DecoderArgs,

    /// Eb/N0 in dB, a single value or `start:stop:step` with both ends
    /// inclusive; may be repeated
    #[arg(long, required = true, allow_hyphen_values = true)]
    snr: Vec<String>,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Fixed-point input scaling: `llr` or `amp:<gain>`
    #[arg(long, default_value = "amp:2", value_parser = parse_fixed_input)]
    fixed_input: FixedInput,

    #[arg(long, default_value_t = 100_000)]
    min_frames: u64,

    #[arg(long, default_value_t = 100)]
    min_errors: u64,

    #[arg(long, default_value_t = 1000)]
    max_errors: u64,

    #[arg(long)]
    max_frames: Option<u64>,

    /// Frames between stop-rule checks
    #[arg(long, default_value_t = 4096)]
    batch: usize,

    /// Output file; stdout when absent
    #[arg(short, long)]
    output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// No per-point progress on stderr
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct AllocateArgs {
    /// Code parameters `m,r`
    #[arg(long, value_parser = parse_code)]
    code: (u32, u32),

    #[command(flatten)]
    schedule: ScheduleArgs,

    /// Output file; stdout when absent
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportLpArgs {
    /// Code parameters `m,r`
    #[arg(long, value_parser = parse_code)]
    code: (u32, u32),

    #[arg(short = 'G', long = "groups")]
    groups: usize,

    #[arg(long)]
    lambda: usize,

    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Subcommand, Debug)]
enum HwArch {
    Iupa {
        #[arg(long, value_parser = parse_code)]
        code: (u32, u32),
        #[arg(short = 'G', long = "groups")]
        groups: usize,
        #[arg(long)]
        lambda: usize,
        /// Clock frequency in MHz
        #[arg(short, default_value_t = 500.0)]
        f: f64,
        #[arg(long)]
        t_fod: Option<usize>,
        #[arg(long, default_value_t = 2)]
        iters: usize,
    },
    Cpa {
        #[arg(long, value_parser = parse_code)]
        code: (u32, u32),
        #[arg(short)]
        p: usize,
        /// Clock frequency in MHz
        #[arg(short, default_value_t = 500.0)]
        f: f64,
        #[arg(long)]
        t_fod: Option<usize>,
        #[arg(long)]
        t_add: Option<usize>,
        #[arg(long, default_value_t = 2)]
        iters: usize,
    },
}

#[derive(Subcommand, Debug)]
enum CodecOp {
    /// Print the codeword of a message given as a bit string
    Encode {
        #[arg(long, value_parser = parse_code)]
        code: (u32, u32),
        #[arg(long)]
        message: String,
    },
    /// Decode one comma-separated LLR vector
    Decode {
        #[command(flatten)]
        decoder: DecoderArgs,
        #[arg(long, allow_hyphen_values = true)]
        llr: String,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<rmpa::Error> for CliError {
    fn from(e: rmpa::Error) -> Self {
        match e {
            rmpa::Error::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn parse_code(s: &str) -> Result<(u32, u32), String> {
    let (m, r) = s.split_once(',').ok_or("expected m,r")?;
    let m = m.trim().parse().map_err(|_| format!("bad m in {s:?}"))?;
    let r = r.trim().parse().map_err(|_| format!("bad r in {s:?}"))?;
    Ok((m, r))
}

fn parse_quant(s: &str) -> Result<QFormat, String> {
    QFormat::parse(s).map_err(|e| e.to_string())
}

fn parse_fixed_input(s: &str) -> Result<FixedInput, String> {
    FixedInput::parse(s).map_err(|e| e.to_string())
}

/// Expands `a:b:c` arguments into the grid they describe.
fn snr_points(raw: &[String]) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for item in raw {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| config(format!("bad Eb/N0 value {t:?}")));
        match parts.as_slice() {
            [x] => out.push(num(x)?),
            [a, b, c] => out.extend(snr_grid(num(a)?, num(b)?, num(c)?)?),
            _ => return Err(config(format!("SNR sweep {item:?} is not start:stop:step"))),
        }
    }
    if out.is_empty() {
        return Err(config("no Eb/N0 points given"));
    }
    Ok(out)
}

fn resolve_schedule(m: u32, args: &ScheduleArgs) -> Result<IupaSchedule, CliError> {
    let rm = build_redundancy_matrix(m)?;
    if args.ideal {
        return Ok(ideal_schedule(&rm));
    }
    if let Some(path) = &args.schedule {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let sched = IupaSchedule::from_json(&text).map_err(|e| config(format!("{}: {e}", path.display())))?;
        sched.validate(&rm).map_err(|e| config(format!("{}: {e}", path.display())))?;
        return Ok(sched);
    }
    let (Some(g), Some(lambda)) = (args.groups, args.lambda) else {
        return Err(config("IUPA needs --ideal, --schedule or -G with --lambda"));
    };
    if !(args.time_limit.is_finite() && args.time_limit > 0.0) {
        return Err(config("--time-limit must be positive"));
    }
    let model = build_ilp(&rm, g, lambda)?;
    let opts = SolveOptions { time_limit: Duration::from_secs_f64(args.time_limit), node_limit: Some(args.node_limit) };
    let assign = solve_ilp(&model, opts)?;
    assign.verify(&model).map_err(|e| CliError::Runtime(format!("solver returned an invalid assignment: {e}")))?;
    Ok(derive_schedule(&assign, &rm)?)
}

fn build_decoder(args: &DecoderArgs) -> Result<Decoder, CliError> {
    let (m, r) = args.code;
    let mut cfg = DecoderConfig::new(m, r).with_quant(args.quant);
    if let Some(n) = args.nmax {
        cfg.n_max = n;
    }
    cfg.early_stop = !args.no_early_stop;
    cfg.second_order = match args.second_order {
        SecondOrderArg::Exact => SecondOrderCombine::ExactSum,
        SecondOrderArg::Split => SecondOrderCombine::AdderDividerSplit,
    };
    cfg.cpa = CpaArithmetic::new(args.p, args.tree.into(), args.acc.into());
    cfg.cpa.handoff = match args.handoff {
        HandoffArg::Saturate => Handoff::Saturate,
        HandoffArg::Rescale => Handoff::Rescale,
    };
    let s = &args.schedule;
    let has_schedule = s.ideal || s.schedule.is_some() || s.groups.is_some();
    if args.decoder != DecoderKind::Iupa && has_schedule {
        return Err(config("schedule options apply to the IUPA decoder only"));
    }
    Ok(match args.decoder {
        DecoderKind::Ipa => Decoder::ipa(cfg)?,
        DecoderKind::Cpa => Decoder::cpa(cfg)?,
        DecoderKind::Iupa => Decoder::iupa(cfg, resolve_schedule(m, s)?)?,
    })
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

fn sim(args: SimArgs) -> Result<(), CliError> {
    let decoder = build_decoder(&args.decoder)?;
    let points = snr_points(&args.snr)?;
    let mut exp = Experiment::new(decoder, points, args.seed);
    exp.stop = StopRule {
        min_frames: args.min_frames,
        min_errors: args.min_errors,
        max_errors: args.max_errors,
        max_frames: args.max_frames.unwrap_or(u64::MAX),
    };
    exp.workers = args.workers;
    exp.batch = args.batch;
    exp.fixed_input = args.fixed_input;
    let quiet = args.quiet;
    let records = run_fer_with(&exp, |r| {
        if !quiet {
            eprintln!(
                "{:.2} dB: {} errors / {} frames, FER {:.3e} ({:.1} s)",
                r.ebn0_db, r.errors, r.frames, r.fer, r.wall_time
            );
        }
    })?;
    let text = match args.format {
        Format::Csv => to_csv(&records),
        Format::Jsonl => to_jsonl(&records),
    };
    write_output(args.output.as_deref(), &text)
}

fn allocate(args: AllocateArgs) -> Result<(), CliError> {
    let (m, r) = args.code;
    if r != 3 {
        return Err(config(format!("allocation is defined for RM(m,3), got RM({m},{r})")));
    }
    let sched = resolve_schedule(m, &args.schedule)?;
    if let Some(total) = sched.total_pus {
        eprintln!(
            "{}: {} PUs, {} duplicate labels, {} first-order decodings per iteration{}",
            sched.id(),
            total,
            sched.duplicates,
            sched.fods_per_iteration(),
            if sched.proven_optimal == Some(true) { " (optimal)" } else { "" }
        );
    }
    write_output(args.output.as_deref(), &(sched.to_json()? + "\n"))
}

fn export(args: ExportLpArgs) -> Result<(), CliError> {
    let (m, r) = args.code;
    if r != 3 {
        return Err(config(format!("allocation is defined for RM(m,3), got RM({m},{r})")));
    }
    let model = build_ilp(&build_redundancy_matrix(m)?, args.groups, args.lambda)?;
    export_lp(&model, &args.output).map_err(|e| match e {
        rmpa::Error::Io(io) => io_err(&args.output, io),
        other => other.into(),
    })
}

fn hwmodel(arch: HwArch) -> Result<(), CliError> {
    let est = match arch {
        HwArch::Iupa { code: (m, r), groups, lambda, f, t_fod, iters } => {
            if r != 3 {
                return Err(config(format!("the IUPA model is defined for RM(m,3), got RM({m},{r})")));
            }
            iupa_model(m, groups, lambda, f, t_fod, iters)?
        }
        HwArch::Cpa { code: (m, r), p, f, t_fod, t_add, iters } => cpa_model(m, r, p, f, t_fod, t_add, iters)?,
    };
    let text = serde_json::to_string_pretty(&est).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(None, &(text + "\n"))
}

fn codec(op: CodecOp) -> Result<(), CliError> {
    match op {
        CodecOp::Encode { code: (m, r), message } => {
            let code = RmCode::new(m, r)?;
            let u = message
                .trim()
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    _ => Err(config(format!("message bit {c:?} is not 0 or 1"))),
                })
                .collect::<Result<Vec<u8>, _>>()?;
            let c = code.encode(&u)?;
            write_output(None, &(bits(&c) + "\n"))
        }
        CodecOp::Decode { decoder, llr } => {
            let dec = build_decoder(&decoder)?;
            let values = llr
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| config(format!("bad LLR value {t:?}"))))
                .collect::<Result<Vec<f64>, _>>()?;
            let input = match decoder.quant {
                Some(q) => LlrVector::quantized(&values, q),
                None => LlrVector::Real(values),
            };
            let out = dec.decode(&input)?;
            let json = serde_json::json!({
                "codeword": bits(&out.codeword),
                "iterations": out.iterations,
                "fod_calls": out.fod_calls,
            });
            write_output(None, &(json.to_string() + "\n"))
        }
    }
}

fn bits(v: &[u8]) -> String {
    v.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sim(a) => sim(a),
        Command::Allocate(a) => allocate(a),
        Command::ExportLp(a) => export(a),
        Command::Hwmodel { arch } => hwmodel(arch),
        Command::Codec { op } => codec(op),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
