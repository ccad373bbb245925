//! Reference reductions the compressors are compared against: FIFO, random
//! and uniform selection, contiguous average/max pooling, and k-means.
//!
//! Every method returns `min(N, budget)` frames together with the source
//! positions behind each output.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor_io::{FeatureSequence, Frame};

pub const DEFAULT_KMEANS_ITERS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineMethod {
    Fifo,
    Random,
    Uniform,
    Avgpool,
    Maxpool,
    Kmeans,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Fifo => "fifo",
            BaselineMethod::Random => "random",
            BaselineMethod::Uniform => "uniform",
            BaselineMethod::Avgpool => "avgpool",
            BaselineMethod::Maxpool => "maxpool",
            BaselineMethod::Kmeans => "kmeans",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub budget: usize,
    pub seed: u64,
    pub kmeans_iters: usize,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, budget: usize) -> Self {
        Self {
            method,
            budget,
            seed: 0,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub sequence: FeatureSequence,
    /// Input positions contributing to each output frame, ascending.
    pub sources: Vec<Vec<usize>>,
}

impl Reduction {
    fn selection(seq: &FeatureSequence, keep: Vec<usize>) -> Result<Self> {
        Ok(Self {
            sequence: seq.select(&keep)?,
            sources: keep.into_iter().map(|i| vec![i]).collect(),
        })
    }
}

pub fn run_baseline(seq: &FeatureSequence, cfg: &BaselineConfig) -> Result<Reduction> {
    if cfg.budget == 0 {
        return Err(Error::Validation("budget must be at least 1".into()));
    }
    match cfg.method {
        BaselineMethod::Fifo => fifo_keep(seq, cfg.budget),
        BaselineMethod::Random => random_keep(seq, cfg.budget, cfg.seed),
        BaselineMethod::Uniform => uniform_keep(seq, cfg.budget),
        BaselineMethod::Avgpool => pool_compress(seq, cfg.budget, PoolMode::Avg),
        BaselineMethod::Maxpool => pool_compress(seq, cfg.budget, PoolMode::Max),
        BaselineMethod::Kmeans => {
            kmeans_compress(seq, cfg.budget, cfg.seed, cfg.kmeans_iters).map(|k| k.reduction)
        }
    }
}

/// The last `min(N, budget)` frames.
pub fn fifo_keep(seq: &FeatureSequence, budget: usize) -> Result<Reduction> {
    let n = seq.len();
    Reduction::selection(seq, (n.saturating_sub(budget)..n).collect())
}

/// A uniformly random subset of `min(N, budget)` frames, in temporal order.
pub fn random_keep(seq: &FeatureSequence, budget: usize, seed: u64) -> Result<Reduction> {
    let n = seq.len();
    let m = budget.min(n);
    let mut rng = SplitMix64::new(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    // Partial Fisher-Yates: the first m slots become the sample.
    for i in 0..m {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    let mut keep = pool[..m].to_vec();
    keep.sort_unstable();
    Reduction::selection(seq, keep)
}

/// Evenly spaced positions `round(m (N-1) / (E-1))`, both endpoints included.
pub fn uniform_positions(n: usize, budget: usize) -> Vec<usize> {
    if budget >= n {
        return (0..n).collect();
    }
    if budget <= 1 {
        return vec![0];
    }
    let step = (n - 1) as f64 / (budget - 1) as f64;
    let mut out: Vec<usize> = Vec::with_capacity(budget);
    for m in 0..budget {
        let mut idx = (m as f64 * step).round() as usize;
        if let Some(&prev) = out.last() {
            if idx <= prev {
                idx = prev + 1;
            }
        }
        out.push(idx.min(n - 1));
    }
    out
}

pub fn uniform_keep(seq: &FeatureSequence, budget: usize) -> Result<Reduction> {
    Reduction::selection(seq, uniform_positions(seq.len(), budget))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// Contiguous bins whose sizes differ by at most one, larger bins first.
pub fn pool_bins(n: usize, budget: usize) -> Vec<std::ops::Range<usize>> {
    let bins = budget.min(n).max(1);
    let (base, extra) = (n / bins, n % bins);
    let mut start = 0;
    (0..bins)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

pub fn pool_compress(seq: &FeatureSequence, budget: usize, mode: PoolMode) -> Result<Reduction> {
    let bins = pool_bins(seq.len(), budget);
    let dim = seq.frame_len();
    let mut frames = Vec::with_capacity(bins.len());
    for bin in &bins {
        let members = &seq.frames()[bin.clone()];
        let values: Vec<f32> = match mode {
            PoolMode::Avg => {
                let mut acc = vec![0.0f64; dim];
                for f in members {
                    acc.iter_mut().zip(&f.values).for_each(|(a, &v)| *a += v as f64);
                }
                acc.iter().map(|a| (a / members.len() as f64) as f32).collect()
            }
            PoolMode::Max => {
                let mut acc = members[0].values.clone();
                for f in &members[1..] {
                    acc.iter_mut().zip(&f.values).for_each(|(a, &v)| *a = a.max(v));
                }
                acc
            }
        };
        frames.push(Frame {
            values,
            tokens: seq.tokens(),
            channels: seq.channels(),
            temporal_index: members[0].temporal_index,
            weight: members.iter().map(|f| f.weight).sum(),
        });
    }
    Ok(Reduction {
        sequence: FeatureSequence::from_episodes(frames)?,
        sources: bins.into_iter().map(|r| r.collect()).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub reduction: Reduction,
    /// Within-cluster sum of squares after the seeding assignment and after
    /// every Lloyd iteration.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if w > 0.0 && cum > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave the target just past the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            chosen.iter().position(|&c| !c).unwrap()
        };
        chosen[pick] = true;
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
        centroids.push(points[pick].clone());
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best.0
        })
        .collect()
}

fn wcss(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    (sums, counts)
}

/// Recomputes centroids; an empty cluster takes over the point farthest from
/// its own centroid among clusters with more than one member.
fn update(points: &[Vec<f64>], labels: &mut [usize], k: usize) -> Vec<Vec<f64>> {
    let (mut centroids, mut counts) = means(points, labels, k);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..points.len())
            .filter(|&i| counts[labels[i]] > 1)
            .fold(None, |best: Option<(usize, f64)>, i| {
                let d = sq_dist(&points[i], &centroids[labels[i]]);
                match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                }
            })
            .map(|(i, _)| i)
            .expect("N >= k guarantees a cluster with two members");
        labels[far] = empty;
        (centroids, counts) = means(points, labels, k);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding on flattened frames.
///
/// Outputs are cluster means ordered by their earliest member.
pub fn kmeans_compress(seq: &FeatureSequence, k: usize, seed: u64, iters: usize) -> Result<KMeansResult> {
    let n = seq.len();
    if k == 0 || n < k {
        return Err(Error::Contract(format!("k-means needs 1 <= k <= N, got k={k}, N={n}")));
    }
    let points: Vec<Vec<f64>> = seq
        .frames()
        .iter()
        .map(|f| f.values.iter().map(|&v| v as f64).collect())
        .collect();
    let mut rng = SplitMix64::new(seed);
    let mut centroids = kmeans_pp(&points, k, &mut rng);
    let mut labels = assign(&points, &centroids);
    let mut history = vec![wcss(&points, &labels, &centroids)];
    let mut iterations = 0;
    for _ in 0..iters.max(1) {
        iterations += 1;
        centroids = update(&points, &mut labels, k);
        let next = assign(&points, &centroids);
        history.push(wcss(&points, &next, &centroids));
        let stable = next == labels;
        labels = next;
        if stable {
            break;
        }
    }
    update(&points, &mut labels, k);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members.sort_by_key(|m| m[0]);
    let dim = seq.frame_len();
    let frames = members
        .iter()
        .map(|m| {
            let mut acc = vec![0.0f64; dim];
            for &i in m {
                acc.iter_mut().zip(&points[i]).for_each(|(a, x)| *a += x);
            }
            let first = &seq.frames()[m[0]];
            Frame {
                values: acc.iter().map(|a| (a / m.len() as f64) as f32).collect(),
                tokens: first.tokens,
                channels: first.channels,
                temporal_index: first.temporal_index,
                weight: m.iter().map(|&i| seq.frames()[i].weight).sum(),
            }
        })
        .collect();
    Ok(KMeansResult {
        reduction: Reduction {
            sequence: FeatureSequence::from_episodes(frames)?,
            sources: members,
        },
        wcss_history: history,
        iterations,
    })
}
