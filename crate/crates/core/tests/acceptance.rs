//! Exit criteria for the library. Each test prints one `[PASS]`/`[FAIL]` line;
//! run with `cargo test --test acceptance -- --nocapture --test-threads 1` to
//! see them in order.

use std::time::{Duration, Instant};

use episodic::baselines::{self, BaselineConfig, BaselineMethod, PoolMode};
use episodic::bench::{bench_input, bench_size, BenchConfig};
use episodic::eco::{eco_compress, stream_compress, EpisodeBuffer, MergeMode, StreamConfig};
use episodic::eval::{compare_merge_logs, compare_runs, fidelity, mean_merge_distance, oracle_eco};
use episodic::rng::SplitMix64;
use episodic::setr::{setr_compress, SetrConfig};
use episodic::simkernel::{cosine, Descriptor};
use episodic::tensor_io::{gen_episode_stream, FeatureSequence, Frame, SyntheticSpec};

fn verdict(name: &str, ok: bool, detail: String) {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn random_sequence(rng: &mut SplitMix64, n: usize, t: usize, c: usize) -> FeatureSequence {
    let data: Vec<f32> = (0..n * t * c).map(|_| rng.next_gaussian() as f32).collect();
    FeatureSequence::from_flat(&data, t, c).unwrap()
}

fn span(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

#[test]
fn capacity_fuzz() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0xC0FFEE);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let n = span(&mut rng, 1, 256);
        let e = span(&mut rng, 1, 32);
        let w = span(&mut rng, 1, 32);
        let t = span(&mut rng, 1, 4);
        let c = span(&mut rng, 1, 16);
        let mode = if rng.below(2) == 0 { MergeMode::Plain } else { MergeMode::Weighted };
        let pe_scale = [0.0, 0.1][rng.below(2)];
        let seq = random_sequence(&mut rng, n, t, c);
        let mut buffer = EpisodeBuffer::new(e, pe_scale, mode);
        for window in seq.frames().chunks(w) {
            buffer.append_or_compress(window.to_vec()).unwrap();
            if buffer.episodes().len() > e {
                failures.push(format!("case {case}: {} > E={e}", buffer.episodes().len()));
            }
        }
        let mass: u64 = buffer.episodes().iter().map(|f| f.weight).sum();
        if mass != n as u64 {
            failures.push(format!("case {case}: weight {mass} != N={n}"));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "capacity fuzz",
        failures.is_empty() && elapsed < Duration::from_secs(60),
        format!("1000 streams, {} violations, {:.2?} (limit 60s) {:?}", failures.len(), elapsed, failures.first()),
    );
}

#[test]
fn oracle_equivalence() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(0x0AC1E);
    let mut failures = Vec::new();
    for case in 0..200 {
        let n = span(&mut rng, 2, 64);
        let t = span(&mut rng, 1, 4);
        let c = span(&mut rng, 1, 8);
        let capacity = span(&mut rng, 1, n);
        let cfg = StreamConfig {
            window_size: n,
            capacity,
            pe_scale: [0.0, 0.1][rng.below(2)],
            merge_mode: if rng.below(2) == 0 { MergeMode::Plain } else { MergeMode::Weighted },
        };
        let seq = random_sequence(&mut rng, n, t, c);
        let fast = stream_compress(&seq, &cfg).unwrap();
        let (slow, slow_log) = oracle_eco(&seq, &cfg).unwrap();
        if let Some(at) = compare_merge_logs(&fast.merge_log, &slow_log, 0.0) {
            failures.push(format!("case {case}: logs diverge at event {at}"));
        }
        let cmp = compare_runs(&fast.episodes, &slow, 1e-5);
        if !cmp.equal {
            failures.push(format!("case {case}: values {:?} {:?}", cmp.first_divergence, cmp.mismatch));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "oracle equivalence",
        failures.is_empty() && elapsed < Duration::from_secs(30),
        format!("200 cases, {} mismatches, {:.2?} (limit 30s) {:?}", failures.len(), elapsed, failures.first()),
    );
}

fn same_values(a: &FeatureSequence, b: &FeatureSequence) -> bool {
    a.len() == b.len() && a.frames().iter().zip(b.frames()).all(|(x, y)| x.values == y.values)
}

#[test]
fn identity_suite() {
    let mut rng = SplitMix64::new(99);
    let mut failures = Vec::new();
    for case in 0..50 {
        let n = span(&mut rng, 1, 40);
        let (t, c) = (span(&mut rng, 1, 3), span(&mut rng, 1, 6));
        let seq = random_sequence(&mut rng, n, t, c);

        let cfg = StreamConfig {
            window_size: span(&mut rng, 1, 12),
            capacity: n + rng.below(5),
            ..Default::default()
        };
        let eco = stream_compress(&seq, &cfg).unwrap();
        if eco.episodes != seq || !eco.merge_log.is_empty() {
            failures.push(format!("case {case}: eco E>=N"));
        }
        let (setr, _) = setr_compress(&seq, &SetrConfig { stride: 1 }).unwrap();
        if setr != seq {
            failures.push(format!("case {case}: setr k=1"));
        }
        for method in [
            BaselineMethod::Fifo,
            BaselineMethod::Random,
            BaselineMethod::Uniform,
            BaselineMethod::Avgpool,
            BaselineMethod::Maxpool,
            BaselineMethod::Kmeans,
        ] {
            let out = baselines::run_baseline(&seq, &BaselineConfig { seed: case, ..BaselineConfig::new(method, n) }).unwrap();
            if !same_values(&out.sequence, &seq) {
                failures.push(format!("case {case}: {} E=N", method.name()));
            }
        }
    }
    verdict("identity suite", failures.is_empty(), format!("50 inputs x 8 checks, failures {failures:?}"));
}

#[test]
fn worked_examples() {
    let three = vec![
        Frame::raw(vec![1.0, 0.0], 1, 2, 0),
        Frame::raw(vec![0.8, 0.6], 1, 2, 1),
        Frame::raw(vec![0.0, 1.0], 1, 2, 2),
    ];
    let eco = eco_compress(three, 2, 0.0, MergeMode::Plain);
    let want_eco = [[0.9f32, 0.3], [0.0, 1.0]];
    let eco_ok = eco.len() == 2
        && eco.iter().zip(want_eco).all(|(f, w)| f.values.iter().zip(w).all(|(a, b)| (a - b).abs() <= 1e-6));

    let four = FeatureSequence::from_flat(&[1.0, 0.0, 0.6, 0.8, 0.0, 1.0, 1.0, 0.0], 1, 2).unwrap();
    let (setr, _) = setr_compress(&four, &SetrConfig { stride: 2 }).unwrap();
    let want_setr = [[1.0f32, 0.0], [0.3, 0.9]];
    let setr_ok = setr.len() == 2
        && setr
            .frames()
            .iter()
            .zip(want_setr)
            .all(|(f, w)| f.values.iter().zip(w).all(|(a, b)| (a - b).abs() <= 1e-6));
    let eco_vals: Vec<&Vec<f32>> = eco.iter().map(|f| &f.values).collect();
    let setr_vals: Vec<&Vec<f32>> = setr.frames().iter().map(|f| &f.values).collect();
    verdict(
        "worked examples",
        eco_ok && setr_ok,
        format!("eco {eco_vals:?}, setr {setr_vals:?}"),
    );
}

/// Greedy one-to-one matching of outputs to centers; returns the smallest
/// matched cosine, or None when some output has no unused center left.
fn match_to_centers(out: &FeatureSequence, centers: &[Vec<f64>]) -> Option<f64> {
    let mut used = vec![false; centers.len()];
    let mut worst = f64::INFINITY;
    for f in out.frames() {
        let d = Descriptor(f.values.iter().map(|&v| v as f64).collect());
        let (best, cos) = centers
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, c)| (i, cosine(&d, &Descriptor(c.clone()))))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        used[best] = true;
        worst = worst.min(cos);
    }
    Some(worst)
}

#[test]
fn cluster_recovery() {
    let mut lines = Vec::new();
    let mut ok = true;
    for (e, per_cluster) in [(4, 5), (10, 5), (20, 5)] {
        let spec = SyntheticSpec {
            num_clusters: e,
            frames_per_cluster: per_cluster,
            tokens: 1,
            channels: 32,
            noise_sigma: 0.01,
            seed: 7 + e as u64,
        };
        let seq = gen_episode_stream(&spec).unwrap();
        let centers = spec.centers().unwrap();
        let cfg = StreamConfig { capacity: e, window_size: 10, ..Default::default() };
        let out = stream_compress(&seq, &cfg).unwrap();
        let worst = match_to_centers(&out.episodes, &centers);
        let pass = out.episodes.len() == e && worst.is_some_and(|w| w >= 0.99);
        ok &= pass;
        lines.push(format!("E={e} N={} eco min cos {worst:?}", seq.len()));

        if e == 20 {
            // Paper default configuration: N=100, E=20, w=10, keep ratio 0.2.
            let (semantic, _) = setr_compress(&seq, &SetrConfig::from_keep_ratio(0.2).unwrap()).unwrap();
            let worst = match_to_centers(&semantic, &centers);
            let pass = seq.len() == 100 && semantic.len() == 20 && worst.is_some_and(|w| w >= 0.99);
            ok &= pass;
            lines.push(format!("setr keep 0.2 -> {} frames, min cos {worst:?}", semantic.len()));
        }
    }
    verdict("cluster recovery", ok, lines.join("; "));
}

#[test]
fn ordering_proxy() {
    let start = Instant::now();
    let seeds = 50;
    let e = 20;
    let (mut eco, mut fifo, mut random, mut setr, mut avg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let spec = SyntheticSpec {
            num_clusters: e,
            frames_per_cluster: 7,
            tokens: 1,
            channels: 32,
            noise_sigma: 0.05,
            seed: 1000 + seed,
        };
        let seq = gen_episode_stream(&spec).unwrap();
        let cfg = StreamConfig { capacity: e, window_size: 10, ..Default::default() };
        eco += fidelity(&seq, &stream_compress(&seq, &cfg).unwrap().episodes).unwrap();
        fifo += fidelity(&seq, &baselines::fifo_keep(&seq, e).unwrap().sequence).unwrap();
        random += fidelity(&seq, &baselines::random_keep(&seq, e, seed).unwrap().sequence).unwrap();

        let (semantic, _) = setr_compress(&seq, &SetrConfig::from_keep_ratio(0.2).unwrap()).unwrap();
        setr += fidelity(&seq, &semantic).unwrap();
        let pooled = baselines::pool_compress(&seq, semantic.len(), PoolMode::Avg).unwrap();
        avg += fidelity(&seq, &pooled.sequence).unwrap();
    }
    let k = seeds as f64;
    let (eco, fifo, random, setr, avg) = (eco / k, fifo / k, random / k, setr / k, avg / k);
    let elapsed = start.elapsed();
    verdict(
        "ordering proxy",
        eco - fifo > 0.05 && eco - random > 0.05 && setr >= avg && elapsed < Duration::from_secs(120),
        format!(
            "mean fidelity eco {eco:.4} fifo {fifo:.4} random {random:.4}; setr {setr:.4} avgpool {avg:.4}; {elapsed:.2?} (limit 120s)"
        ),
    );
}

#[test]
fn scaling() {
    let cfg = BenchConfig { reps: 5, ..Default::default() };
    let bound = cfg.stream.capacity + cfg.stream.window_size;
    let small = bench_size(&bench_input(10_000, &cfg).unwrap(), &cfg).unwrap();
    let large = bench_size(&bench_input(100_000, &cfg).unwrap(), &cfg).unwrap();
    let ratio = small.throughput_fps.max(large.throughput_fps) / small.throughput_fps.min(large.throughput_fps);
    verdict(
        "scaling",
        large.peak_working_set <= bound && small.peak_working_set <= bound && ratio <= 2.0,
        format!(
            "peak {} / {} frames (bound {bound}); throughput 10k {:.0}/s, 100k {:.0}/s, ratio {ratio:.2} (limit 2)",
            small.peak_working_set, large.peak_working_set, small.throughput_fps, large.throughput_fps
        ),
    );
}

/// Blocks of `centers` laid out twice in a row, so every cluster has a
/// look-alike block far away in time.
fn repeated_clusters(seed: u64, clusters: usize, per_block: usize) -> FeatureSequence {
    let spec = SyntheticSpec {
        num_clusters: clusters,
        frames_per_cluster: per_block,
        tokens: 1,
        channels: 16,
        noise_sigma: 0.05,
        seed,
    };
    let centers = spec.centers().unwrap();
    let mut rng = SplitMix64::new(seed ^ 0x5EED);
    let sigma = spec.noise_sigma / (16f64).sqrt();
    let mut frames = Vec::new();
    for _ in 0..2 {
        for center in &centers {
            for _ in 0..per_block {
                let values = center.iter().map(|&c| (c + sigma * rng.next_gaussian()) as f32).collect();
                let idx = frames.len() as u64;
                frames.push(Frame::raw(values, 1, 16, idx));
            }
        }
    }
    FeatureSequence::new(frames).unwrap()
}

#[test]
fn pe_effect() {
    let (mut with_pe, mut without_pe) = (0.0, 0.0);
    let trials = 20;
    for seed in 0..trials {
        let seq = repeated_clusters(300 + seed, 4, 6);
        let base = StreamConfig { capacity: 8, window_size: 10, pe_scale: 0.1, merge_mode: MergeMode::Plain };
        with_pe += mean_merge_distance(&stream_compress(&seq, &base).unwrap().merge_log);
        without_pe += mean_merge_distance(&stream_compress(&seq, &StreamConfig { pe_scale: 0.0, ..base }).unwrap().merge_log);
    }
    let (a, b) = (with_pe / trials as f64, without_pe / trials as f64);
    verdict(
        "positional encoding effect",
        a < b,
        format!("mean merged-pair index distance: pe 0.1 -> {a:.3}, pe 0 -> {b:.3}"),
    );
}
