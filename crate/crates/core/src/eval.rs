//! Quality metrics, the brute-force reference compressor, and run comparison.

use crate::baselines::{run_baseline, BaselineConfig, BaselineMethod};
use crate::eco::{merge_sources, stream_compress, MergeEvent, MergeMode, StreamConfig};
use crate::error::{Error, Result};
use crate::setr::{setr_compress, SetrConfig};
use crate::simkernel::{cosine, flatten_descriptor, l2_normalize, similarity_descriptor, Descriptor};
use crate::tensor_io::{FeatureSequence, Frame};

/// Largest input the reference compressor accepts.
pub const ORACLE_MAX_FRAMES: usize = 512;
pub const DEFAULT_REL_TOL: f64 = 1e-5;
pub const ABS_FLOOR: f64 = 1e-7;

fn check_shapes(a: &FeatureSequence, b: &FeatureSequence) -> Result<()> {
    if (a.tokens(), a.channels()) != (b.tokens(), b.channels()) {
        return Err(Error::Validation(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.tokens(),
            a.channels(),
            b.tokens(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean over original frames of the best cosine to any compressed frame.
pub fn fidelity(original: &FeatureSequence, compressed: &FeatureSequence) -> Result<f64> {
    check_shapes(original, compressed)?;
    let kept: Vec<Descriptor> = compressed
        .frames()
        .iter()
        .map(|f| l2_normalize(&flatten_descriptor(f)))
        .collect();
    let total: f64 = original
        .frames()
        .iter()
        .map(|f| {
            let d = l2_normalize(&flatten_descriptor(f));
            kept.iter().map(|k| cosine(&d, k)).fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / original.len() as f64)
}

/// Fraction of input positions that feed at least one output.
pub fn temporal_coverage(merge_sources: &[Vec<usize>], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut seen = vec![false; n];
    for &i in merge_sources.iter().flatten() {
        if i < n {
            seen[i] = true;
        }
    }
    seen.iter().filter(|&&s| s).count() as f64 / n as f64
}

/// Mean absolute temporal distance between the two frames of each merge.
pub fn mean_merge_distance(log: &[MergeEvent]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter().map(|e| e.index_distance() as f64).sum::<f64>() / log.len() as f64
}

fn oracle_merge(a: &Frame, b: &Frame, mode: MergeMode) -> Frame {
    let (wa, wb) = (a.weight as f64, b.weight as f64);
    let mut values = Vec::with_capacity(a.values.len());
    for k in 0..a.values.len() {
        let (x, y) = (a.values[k] as f64, b.values[k] as f64);
        let v = match mode {
            MergeMode::Plain => (x + y) / 2.0,
            MergeMode::Weighted => (wa * x + wb * y) / (wa + wb),
        };
        values.push(v as f32);
    }
    let index = ((wa * a.temporal_index as f64 + wb * b.temporal_index as f64) / (wa + wb)).round();
    Frame {
        values,
        tokens: a.tokens,
        channels: a.channels,
        temporal_index: index as u64,
        weight: a.weight + b.weight,
    }
}

/// Naive greedy merge over the whole sequence as one window: every iteration
/// rebuilds all descriptors and rescans every pair.
pub fn oracle_eco(seq: &FeatureSequence, cfg: &StreamConfig) -> Result<(FeatureSequence, Vec<MergeEvent>)> {
    cfg.validate()?;
    if seq.len() > ORACLE_MAX_FRAMES {
        return Err(Error::Contract(format!(
            "oracle limited to {ORACLE_MAX_FRAMES} frames, got {}",
            seq.len()
        )));
    }
    let step = seq.total_weight();
    let mut set: Vec<Frame> = seq.frames().to_vec();
    let mut log = Vec::new();
    while set.len() > cfg.capacity {
        let descs: Vec<Descriptor> = set.iter().map(|f| similarity_descriptor(f, cfg.pe_scale)).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..set.len() {
            for j in 0..set.len() {
                if j <= i {
                    continue;
                }
                let s = cosine(&descs[i], &descs[j]);
                if best.is_none_or(|(_, _, b)| s > b) {
                    best = Some((i, j, s));
                }
            }
        }
        let (i, j, similarity) = best.expect("at least two frames above capacity");
        log.push(MergeEvent {
            step,
            kept_slot: i,
            removed_slot: j,
            similarity,
            kept_index: set[i].temporal_index,
            removed_index: set[j].temporal_index,
        });
        let merged = oracle_merge(&set[i], &set[j], cfg.merge_mode);
        set[i] = merged;
        set.remove(j);
    }
    Ok((FeatureSequence::from_episodes(set)?, log))
}

/// Location of the first value outside tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Divergence {
    pub frame: usize,
    pub token: usize,
    pub channel: usize,
    pub left: f32,
    pub right: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub equal: bool,
    pub first_divergence: Option<Divergence>,
    /// Set when lengths or shapes differ and no value comparison was made.
    pub mismatch: Option<String>,
}

pub fn values_close(a: f64, b: f64, rel_tol: f64) -> bool {
    (a - b).abs() <= (rel_tol * a.abs().max(b.abs())).max(ABS_FLOOR)
}

/// Frame-by-frame comparison with relative tolerance and an absolute floor.
pub fn compare_runs(a: &FeatureSequence, b: &FeatureSequence, rel_tol: f64) -> Comparison {
    let mismatch = if a.len() != b.len() {
        Some(format!("lengths differ: {} vs {}", a.len(), b.len()))
    } else if (a.tokens(), a.channels()) != (b.tokens(), b.channels()) {
        Some(format!(
            "shapes differ: {}x{} vs {}x{}",
            a.tokens(),
            a.channels(),
            b.tokens(),
            b.channels()
        ))
    } else {
        None
    };
    if mismatch.is_some() {
        return Comparison {
            equal: false,
            first_divergence: None,
            mismatch,
        };
    }
    let c = a.channels();
    for (frame, (fa, fb)) in a.frames().iter().zip(b.frames()).enumerate() {
        for (k, (&x, &y)) in fa.values.iter().zip(&fb.values).enumerate() {
            if !values_close(x as f64, y as f64, rel_tol) {
                return Comparison {
                    equal: false,
                    first_divergence: Some(Divergence {
                        frame,
                        token: k / c,
                        channel: k % c,
                        left: x,
                        right: y,
                    }),
                    mismatch: None,
                };
            }
        }
    }
    Comparison {
        equal: true,
        first_divergence: None,
        mismatch: None,
    }
}

/// Event-by-event comparison of two merge logs: slots exact, similarity
/// within `rel_tol`. Returns the first differing position.
pub fn compare_merge_logs(a: &[MergeEvent], b: &[MergeEvent], rel_tol: f64) -> Option<usize> {
    let n = a.len().max(b.len());
    (0..n).find(|&i| match (a.get(i), b.get(i)) {
        (Some(x), Some(y)) => {
            x.step != y.step
                || x.kept_slot != y.kept_slot
                || x.removed_slot != y.removed_slot
                || !values_close(x.similarity, y.similarity, rel_tol)
        }
        _ => true,
    })
}

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub merges: usize,
    pub log_divergence: Option<usize>,
    pub values: Comparison,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.log_divergence.is_none() && self.values.equal
    }
}

/// Runs the streaming compressor as a single window against [`oracle_eco`].
pub fn oracle_check(seq: &FeatureSequence, cfg: &StreamConfig) -> Result<OracleCheck> {
    let single = StreamConfig {
        window_size: seq.len(),
        ..*cfg
    };
    let fast = stream_compress(seq, &single)?;
    let (slow, slow_log) = oracle_eco(seq, &single)?;
    Ok(OracleCheck {
        merges: slow_log.len(),
        log_divergence: compare_merge_logs(&fast.merge_log, &slow_log, 0.0),
        values: compare_runs(&fast.episodes, &slow, DEFAULT_REL_TOL),
    })
}

/// Metrics of one reduction of `original`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScore {
    pub method: String,
    pub output_frames: usize,
    pub fidelity: f64,
    pub coverage: f64,
    pub compression_ratio: f64,
}

fn score(method: &str, original: &FeatureSequence, out: &FeatureSequence, sources: &[Vec<usize>]) -> Result<MethodScore> {
    Ok(MethodScore {
        method: method.to_string(),
        output_frames: out.len(),
        fidelity: fidelity(original, out)?,
        coverage: temporal_coverage(sources, original.len()),
        compression_ratio: original.len() as f64 / out.len() as f64,
    })
}

/// Scores ECO, SeTR and every baseline at a common output budget.
pub fn compare_methods(
    seq: &FeatureSequence,
    eco_cfg: &StreamConfig,
    setr_cfg: &SetrConfig,
    seed: u64,
) -> Result<Vec<MethodScore>> {
    let mut scores = Vec::new();
    let eco = stream_compress(seq, eco_cfg)?;
    let sources = merge_sources(seq.len(), eco_cfg.window_size, &eco.merge_log);
    scores.push(score("eco", seq, &eco.episodes, &sources)?);

    let (semantic, assigned) = setr_compress(seq, setr_cfg)?;
    let mut groups: Vec<Vec<usize>> = assigned.anchors.iter().map(|&a| vec![a]).collect();
    for (&d, &a) in &assigned.assignment {
        let slot = assigned.anchors.binary_search(&a).expect("anchor");
        groups[slot].push(d);
    }
    scores.push(score("setr", seq, &semantic, &groups)?);

    let budget = eco_cfg.capacity.min(seq.len());
    for method in [
        BaselineMethod::Fifo,
        BaselineMethod::Random,
        BaselineMethod::Uniform,
        BaselineMethod::Avgpool,
        BaselineMethod::Maxpool,
        BaselineMethod::Kmeans,
    ] {
        let cfg = BaselineConfig {
            seed,
            ..BaselineConfig::new(method, budget)
        };
        let out = run_baseline(seq, &cfg)?;
        scores.push(score(method.name(), seq, &out.sequence, &out.sources)?);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(data: &[f32], c: usize) -> FeatureSequence {
        FeatureSequence::from_flat(data, 1, c).unwrap()
    }

    #[test]
    fn fidelity_cases() {
        let s = seq(&[1.0, 0.0, 0.6, 0.8, -0.3, 0.2], 2);
        assert!((fidelity(&s, &s).unwrap() - 1.0).abs() < 1e-9);

        let two = seq(&[1.0, 0.0, 0.0, 1.0], 2);
        let one = seq(&[1.0, 0.0], 2);
        assert!((fidelity(&two, &one).unwrap() - 0.5).abs() < 1e-12);

        let reversed = seq(&[-0.3, 0.2, 0.6, 0.8], 2);
        let forward = seq(&[0.6, 0.8, -0.3, 0.2], 2);
        assert_eq!(fidelity(&s, &reversed).unwrap(), fidelity(&s, &forward).unwrap());

        assert!(fidelity(&s, &seq(&[1.0], 1)).is_err());
    }

    #[test]
    fn coverage_cases() {
        let fifo: Vec<Vec<usize>> = vec![vec![8], vec![9]];
        assert_eq!(temporal_coverage(&fifo, 10), 0.2);
        let random: Vec<Vec<usize>> = [0, 2, 3, 7, 9].iter().map(|&i| vec![i]).collect();
        assert_eq!(temporal_coverage(&random, 10), 0.5);

        let data: Vec<f32> = (0..40).map(|i| ((i * 7) % 11) as f32 - 5.0).collect();
        let s = seq(&data, 2);
        let cfg = StreamConfig { window_size: 3, capacity: 4, ..Default::default() };
        let out = stream_compress(&s, &cfg).unwrap();
        let groups = merge_sources(s.len(), 3, &out.merge_log);
        assert_eq!(temporal_coverage(&groups, s.len()), 1.0);
    }

    #[test]
    fn oracle_matches_worked_example() {
        let s = seq(&[1.0, 0.0, 0.8, 0.6, 0.0, 1.0], 2);
        let cfg = StreamConfig { window_size: 3, capacity: 2, pe_scale: 0.0, merge_mode: MergeMode::Plain };
        let (out, log) = oracle_eco(&s, &cfg).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!((log[0].kept_slot, log[0].removed_slot), (0, 1));
        assert!((log[0].similarity - 0.8).abs() < 1e-7); // 0.8, 0.6 stored as f32
        assert!((out.frames()[0].values[0] - 0.9).abs() < 1e-6);
        assert!((out.frames()[0].values[1] - 0.3).abs() < 1e-6);
        assert!(oracle_check(&s, &cfg).unwrap().passed());
    }

    #[test]
    fn oracle_identity_and_guard() {
        let s = seq(&[1.0, 2.0, 3.0], 1);
        let cfg = StreamConfig { capacity: 3, ..Default::default() };
        let (out, log) = oracle_eco(&s, &cfg).unwrap();
        assert_eq!(out, s);
        assert!(log.is_empty());

        let big = seq(&vec![1.0; ORACLE_MAX_FRAMES + 1], 1);
        assert!(matches!(oracle_eco(&big, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn compare_runs_cases() {
        let a = FeatureSequence::from_flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], 2, 2).unwrap();
        assert!(compare_runs(&a, &a.clone(), DEFAULT_REL_TOL).equal);

        let mut data = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        data[7] += 1e-3;
        let b = FeatureSequence::from_flat(&data, 2, 2).unwrap();
        let cmp = compare_runs(&a, &b, DEFAULT_REL_TOL);
        assert!(!cmp.equal);
        let d = cmp.first_divergence.unwrap();
        assert_eq!((d.frame, d.token, d.channel), (1, 1, 1));

        let short = FeatureSequence::from_flat(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert!(compare_runs(&a, &short, DEFAULT_REL_TOL).mismatch.is_some());
    }

    #[test]
    fn single_and_double_precision_pipelines_agree() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(17);
        let data: Vec<f32> = (0..60 * 6).map(|_| rng.next_gaussian() as f32).collect();
        let s = FeatureSequence::from_flat(&data, 2, 3).unwrap();
        let (out, assigned) = setr_compress(&s, &SetrConfig { stride: 4 }).unwrap();

        // Same groups, means kept in f64 end to end and rounded only at the end.
        let mut frames = Vec::new();
        for &a in &assigned.anchors {
            let members: Vec<usize> = std::iter::once(a)
                .chain(assigned.assignment.iter().filter(|(_, &x)| x == a).map(|(&d, _)| d))
                .collect();
            let mean: Vec<f64> = (0..6)
                .map(|k| members.iter().map(|&m| data[m * 6 + k] as f64).sum::<f64>() / members.len() as f64)
                .collect();
            frames.push(Frame::raw(mean.iter().map(|&v| v as f32).collect(), 2, 3, a as u64));
        }
        let reference = FeatureSequence::from_episodes(frames).unwrap();
        assert!(compare_runs(&out, &reference, DEFAULT_REL_TOL).equal);
    }

    #[test]
    fn method_table_covers_every_strategy() {
        let spec = crate::tensor_io::SyntheticSpec {
            num_clusters: 4,
            frames_per_cluster: 6,
            tokens: 1,
            channels: 8,
            noise_sigma: 0.05,
            seed: 2,
        };
        let s = crate::tensor_io::gen_episode_stream(&spec).unwrap();
        let scores = compare_methods(&s, &StreamConfig { capacity: 4, window_size: 5, ..Default::default() }, &SetrConfig { stride: 6 }, 1).unwrap();
        let names: Vec<&str> = scores.iter().map(|s| s.method.as_str()).collect();
        assert_eq!(names, ["eco", "setr", "fifo", "random", "uniform", "avgpool", "maxpool", "kmeans"]);
        for sc in &scores {
            assert!((-1.0..=1.0).contains(&sc.fidelity));
            assert!(sc.compression_ratio > 0.0);
        }
        assert_eq!(scores[0].coverage, 1.0);
    }
}
