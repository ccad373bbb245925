//! Throughput sweep for the streaming compressor.
//!
//! Each size runs once to warm up, then `reps` timed runs; the median wall
//! time is reported.

use std::time::Instant;

use crate::eco::{stream_compress, StreamConfig};
use crate::error::{Error, Result};
use crate::tensor_io::{gen_episode_stream, FeatureSequence, SyntheticSpec};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub stream: StreamConfig,
    pub tokens: usize,
    pub channels: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1_000, 10_000, 100_000],
            stream: StreamConfig::default(),
            tokens: 1,
            channels: 64,
            noise_sigma: 0.05,
            seed: 0,
            reps: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPoint {
    pub frames: usize,
    pub median_ms: f64,
    pub throughput_fps: f64,
    pub peak_working_set: usize,
    pub output_frames: usize,
}

/// Parses `500`, `10k`, `2m` (decimal multipliers).
pub fn parse_size(s: &str) -> Result<usize> {
    let t = s.trim().to_ascii_lowercase();
    let (digits, mult) = match t.as_bytes().last() {
        Some(b'k') => (&t[..t.len() - 1], 1_000),
        Some(b'm') => (&t[..t.len() - 1], 1_000_000),
        _ => (&t[..], 1),
    };
    let n: usize = digits
        .parse()
        .map_err(|_| Error::Validation(format!("bad size {s:?}")))?;
    if n == 0 {
        return Err(Error::Validation("size must be positive".into()));
    }
    Ok(n * mult)
}

pub fn parse_sizes(list: &str) -> Result<Vec<usize>> {
    list.split(',').map(parse_size).collect()
}

/// Clustered input of exactly `n` frames; cluster count is capped by the
/// frame dimension so centers stay orthogonal.
pub fn bench_input(n: usize, cfg: &BenchConfig) -> Result<FeatureSequence> {
    let clusters = 32.min(cfg.tokens * cfg.channels).min(n).max(1);
    let spec = SyntheticSpec {
        num_clusters: clusters,
        frames_per_cluster: n.div_ceil(clusters),
        tokens: cfg.tokens,
        channels: cfg.channels,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
    };
    let mut frames = gen_episode_stream(&spec)?.into_frames();
    frames.truncate(n);
    FeatureSequence::new(frames)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

pub fn bench_size(seq: &FeatureSequence, cfg: &BenchConfig) -> Result<BenchPoint> {
    let warm = stream_compress(seq, &cfg.stream)?;
    let mut times = Vec::with_capacity(cfg.reps.max(1));
    let mut peak = warm.peak_working_set;
    for _ in 0..cfg.reps.max(1) {
        let start = Instant::now();
        let out = stream_compress(seq, &cfg.stream)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        peak = peak.max(out.peak_working_set);
    }
    let median_ms = median(times);
    Ok(BenchPoint {
        frames: seq.len(),
        median_ms,
        throughput_fps: seq.len() as f64 / (median_ms / 1e3).max(1e-9),
        peak_working_set: peak,
        output_frames: warm.episodes.len(),
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchPoint>> {
    cfg.stream.validate()?;
    cfg.sizes
        .iter()
        .map(|&n| bench_size(&bench_input(n, cfg)?, cfg))
        .collect()
}
