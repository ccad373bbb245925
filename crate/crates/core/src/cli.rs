//! `episodic` command line.
//!
//! Exit codes: 0 success, 1 invalid input or failed check, 2 I/O failure.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{run_baseline, BaselineConfig, BaselineMethod, DEFAULT_KMEANS_ITERS};
use crate::bench::{parse_sizes, run_bench, BenchConfig};
use crate::eco::{merge_sources, stream_compress, MergeMode, StreamConfig};
use crate::error::{Error, Result};
use crate::eval::{compare_methods, fidelity, oracle_check, temporal_coverage};
use crate::report::{EvalReport, InputDims, OutputDims};
use crate::setr::{setr_compress, SetrConfig};
use crate::simkernel::DEFAULT_PE_SCALE;
use crate::tensor_io::{gen_episode_stream, read_feature_file, write_feature_file, write_report, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "episodic", version, about = "Bounded-memory compression of feature-frame streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic clustered stream.
    Gen(GenArgs),
    /// Stream a file through the episodic compressor.
    Eco(EcoArgs),
    /// Stride-partition semantic compression.
    Setr(SetrArgs),
    /// Run one of the reference reductions.
    Baseline(BaselineArgs),
    /// Score a compressed file, or compare every method on one input.
    Eval(EvalArgs),
    /// Check the streaming compressor against the brute-force reference.
    OracleCheck(OracleArgs),
    /// Throughput and memory sweep over stream lengths.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Write a JSON run report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EcoParams {
    #[arg(long, default_value_t = 20)]
    capacity: usize,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_PE_SCALE)]
    pe_scale: f64,
    #[arg(long, value_enum, default_value_t = MergeMode::Plain)]
    merge_mode: MergeMode,
}

impl EcoParams {
    fn config(&self) -> StreamConfig {
        StreamConfig {
            window_size: self.window,
            capacity: self.capacity,
            pe_scale: self.pe_scale,
            merge_mode: self.merge_mode,
        }
    }
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
struct StrideParams {
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    keep_ratio: Option<f64>,
}

impl StrideParams {
    fn config(&self, default_ratio: f64) -> Result<SetrConfig> {
        match (self.stride, self.keep_ratio) {
            (Some(k), _) => SetrConfig::with_stride(k),
            (None, Some(r)) => SetrConfig::from_keep_ratio(r),
            (None, None) => SetrConfig::from_keep_ratio(default_ratio),
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    clusters: usize,
    #[arg(long)]
    per_cluster: usize,
    #[arg(long, default_value_t = 1)]
    t: usize,
    #[arg(long, default_value_t = 64)]
    c: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EcoArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    eco: EcoParams,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SetrArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    stride: StrideParams,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[arg(long, default_value_t = 20)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_KMEANS_ITERS)]
    kmeans_iters: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Score this file against the input instead of running every method.
    #[arg(long)]
    compressed: Option<PathBuf>,
    #[command(flatten)]
    eco: EcoParams,
    #[command(flatten)]
    stride: StrideParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    capacity: usize,
    #[arg(long, default_value_t = DEFAULT_PE_SCALE)]
    pe_scale: f64,
    #[arg(long, value_enum, default_value_t = MergeMode::Plain)]
    merge_mode: MergeMode,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value = "1k,10k,100k")]
    sizes: String,
    #[command(flatten)]
    eco: EcoParams,
    #[arg(long, default_value_t = 1)]
    t: usize,
    #[arg(long, default_value_t = 64)]
    c: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn finish(report: EvalReport, path: &Option<PathBuf>) -> Result<()> {
    match path {
        Some(p) => write_report(&report, p),
        None => Ok(()),
    }
}

fn eco_report(report: EvalReport, cfg: &StreamConfig) -> EvalReport {
    report
        .with_config("capacity", cfg.capacity)
        .with_config("window", cfg.window_size)
        .with_config("pe_scale", cfg.pe_scale)
        .with_config("merge_mode", serde_json::to_value(cfg.merge_mode).unwrap())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_clusters: a.clusters,
        frames_per_cluster: a.per_cluster,
        tokens: a.t,
        channels: a.c,
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    let start = Instant::now();
    let seq = gen_episode_stream(&spec)?;
    let gen_ms = ms_since(start);
    write_feature_file(&a.out, &seq)?;
    println!("wrote {} frames ({}x{}) to {}", seq.len(), a.t, a.c, a.out.display());

    let mut r = EvalReport::new("gen")
        .with_config("clusters", a.clusters)
        .with_config("per_cluster", a.per_cluster)
        .with_config("sigma", a.sigma);
    r.input = InputDims::of(&seq);
    r.output = OutputDims { n: seq.len() as u64 };
    r.timing_ms.insert("generate".into(), gen_ms);
    r.seed = Some(a.seed);
    finish(r, &a.common.report)
}

fn cmd_eco(a: EcoArgs) -> Result<()> {
    let cfg = a.eco.config();
    let t0 = Instant::now();
    let seq = read_feature_file(&a.input)?;
    let read_ms = ms_since(t0);
    let t1 = Instant::now();
    let out = stream_compress(&seq, &cfg)?;
    let compress_ms = ms_since(t1);
    write_feature_file(&a.out, &out.episodes)?;
    println!("{} frames -> {} episodes ({} merges)", seq.len(), out.episodes.len(), out.merge_log.len());

    let mut r = eco_report(EvalReport::new("eco"), &cfg);
    r.input = InputDims::of(&seq);
    r.output = OutputDims { n: out.episodes.len() as u64 };
    r.metrics.insert("fidelity".into(), fidelity(&seq, &out.episodes)?);
    let sources = merge_sources(seq.len(), cfg.window_size, &out.merge_log);
    r.metrics.insert("coverage".into(), temporal_coverage(&sources, seq.len()));
    r.metrics.insert("compression_ratio".into(), seq.len() as f64 / out.episodes.len() as f64);
    r.timing_ms.insert("read".into(), read_ms);
    r.timing_ms.insert("compress".into(), compress_ms);
    r.peak_buffer_frames = Some(out.peak_working_set as u64);
    r.set_merge_log(&out.merge_log);
    finish(r, &a.common.report)
}

fn cmd_setr(a: SetrArgs) -> Result<()> {
    let cfg = a.stride.config(0.2)?;
    let seq = read_feature_file(&a.input)?;
    let t0 = Instant::now();
    let (out, assigned) = setr_compress(&seq, &cfg)?;
    let compress_ms = ms_since(t0);
    write_feature_file(&a.out, &out)?;
    println!("{} frames -> {} semantic frames (stride {})", seq.len(), out.len(), cfg.stride);

    let mut r = EvalReport::new("setr").with_config("stride", cfg.stride);
    r.input = InputDims::of(&seq);
    r.output = OutputDims { n: out.len() as u64 };
    r.metrics.insert("fidelity".into(), fidelity(&seq, &out)?);
    r.metrics.insert("coverage".into(), 1.0);
    r.metrics.insert("compression_ratio".into(), seq.len() as f64 / out.len() as f64);
    r.timing_ms.insert("compress".into(), compress_ms);
    r.setr_assignment = Some(assigned.pairs());
    finish(r, &a.common.report)
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let cfg = BaselineConfig {
        method: a.method,
        budget: a.budget,
        seed: a.seed,
        kmeans_iters: a.kmeans_iters,
    };
    let seq = read_feature_file(&a.input)?;
    let t0 = Instant::now();
    let out = run_baseline(&seq, &cfg)?;
    let compress_ms = ms_since(t0);
    write_feature_file(&a.out, &out.sequence)?;
    println!("{}: {} frames -> {}", a.method.name(), seq.len(), out.sequence.len());

    let mut r = EvalReport::new("baseline")
        .with_config("method", a.method.name())
        .with_config("budget", a.budget)
        .with_config("kmeans_iters", a.kmeans_iters);
    r.input = InputDims::of(&seq);
    r.output = OutputDims { n: out.sequence.len() as u64 };
    r.metrics.insert("fidelity".into(), fidelity(&seq, &out.sequence)?);
    r.metrics.insert("coverage".into(), temporal_coverage(&out.sources, seq.len()));
    r.metrics.insert("compression_ratio".into(), seq.len() as f64 / out.sequence.len() as f64);
    r.timing_ms.insert("compress".into(), compress_ms);
    r.seed = Some(a.seed);
    finish(r, &a.common.report)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let seq = read_feature_file(&a.input)?;
    let mut r = EvalReport::new("eval");
    r.input = InputDims::of(&seq);
    r.seed = Some(a.seed);
    if let Some(path) = &a.compressed {
        let comp = read_feature_file(path)?;
        let fid = fidelity(&seq, &comp)?;
        println!("fidelity {fid:.6}  ratio {:.3}", seq.len() as f64 / comp.len() as f64);
        r.output = OutputDims { n: comp.len() as u64 };
        r.metrics.insert("fidelity".into(), fid);
        r.metrics.insert("compression_ratio".into(), seq.len() as f64 / comp.len() as f64);
        r = r.with_config("compressed", path.display().to_string());
        return finish(r, &a.common.report);
    }
    let eco = a.eco.config();
    let setr = a.stride.config(0.2)?;
    let t0 = Instant::now();
    let scores = compare_methods(&seq, &eco, &setr, a.seed)?;
    r.timing_ms.insert("total".into(), ms_since(t0));
    println!("{:<10} {:>7} {:>9} {:>9} {:>7}", "method", "frames", "fidelity", "coverage", "ratio");
    for s in &scores {
        println!(
            "{:<10} {:>7} {:>9.4} {:>9.3} {:>7.2}",
            s.method, s.output_frames, s.fidelity, s.coverage, s.compression_ratio
        );
        r.metrics.insert(format!("{}.fidelity", s.method), s.fidelity);
        r.metrics.insert(format!("{}.coverage", s.method), s.coverage);
        r.metrics.insert(format!("{}.compression_ratio", s.method), s.compression_ratio);
    }
    r.output = OutputDims { n: scores[0].output_frames as u64 };
    r = eco_report(r, &eco).with_config("stride", setr.stride);
    finish(r, &a.common.report)
}

fn cmd_oracle(a: OracleArgs) -> Result<bool> {
    let seq = read_feature_file(&a.input)?;
    let cfg = StreamConfig {
        window_size: seq.len(),
        capacity: a.capacity,
        pe_scale: a.pe_scale,
        merge_mode: a.merge_mode,
    };
    let t0 = Instant::now();
    let check = oracle_check(&seq, &cfg)?;
    let ms = ms_since(t0);
    match (check.log_divergence, &check.values.first_divergence, &check.values.mismatch) {
        (None, None, None) => println!("oracle agrees: {} merges", check.merges),
        (Some(i), _, _) => println!("merge logs diverge at event {i}"),
        (_, Some(d), _) => println!(
            "values diverge at frame {} token {} channel {}: {} vs {}",
            d.frame, d.token, d.channel, d.left, d.right
        ),
        (_, _, Some(m)) => println!("outputs differ: {m}"),
    }
    let mut r = eco_report(EvalReport::new("oracle-check"), &cfg);
    r.input = InputDims::of(&seq);
    r.output = OutputDims { n: (seq.len() - check.merges) as u64 };
    r.metrics.insert("agree".into(), if check.passed() { 1.0 } else { 0.0 });
    r.metrics.insert("merges".into(), check.merges as f64);
    r.timing_ms.insert("check".into(), ms);
    finish(r, &a.common.report)?;
    Ok(check.passed())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        sizes: parse_sizes(&a.sizes)?,
        stream: a.eco.config(),
        tokens: a.t,
        channels: a.c,
        seed: a.seed,
        reps: a.reps,
        ..Default::default()
    };
    let points = run_bench(&cfg)?;
    println!("{:>9} {:>11} {:>14} {:>6}", "frames", "median_ms", "frames_per_s", "peak");
    let mut r = eco_report(EvalReport::new("bench"), &cfg.stream).with_config("sizes", a.sizes.clone());
    r.input = InputDims {
        n: points.iter().map(|p| p.frames as u64).max().unwrap_or(0),
        t: a.t as u64,
        c: a.c as u64,
    };
    r.output = OutputDims { n: points.last().map_or(0, |p| p.output_frames as u64) };
    let mut peak = 0;
    for p in &points {
        println!("{:>9} {:>11.3} {:>14.0} {:>6}", p.frames, p.median_ms, p.throughput_fps, p.peak_working_set);
        r.metrics.insert(format!("throughput_fps.{}", p.frames), p.throughput_fps);
        r.metrics.insert(format!("peak_buffer_frames.{}", p.frames), p.peak_working_set as f64);
        r.timing_ms.insert(format!("median.{}", p.frames), p.median_ms);
        peak = peak.max(p.peak_working_set);
    }
    r.peak_buffer_frames = Some(peak as u64);
    r.seed = Some(a.seed);
    finish(r, &a.common.report)
}

fn exit_code(err: &Error) -> i32 {
    if err.is_io() {
        2
    } else {
        1
    }
}

fn report_error(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

/// Parses `argv` (program name first) and runs the command.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Eco(a) => cmd_eco(a),
        Command::Setr(a) => cmd_setr(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Eval(a) => cmd_eval(a),
        Command::OracleCheck(a) => match cmd_oracle(a) {
            Ok(true) => Ok(()),
            Ok(false) => return 1,
            Err(e) => Err(e),
        },
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

pub fn main_exit_code() -> i32 {
    run_cli(std::env::args_os())
}

