//! Episodic compressor: a buffer of at most `E` episodes fed one window at a
//! time.
//!
//! When a window fits beside the buffer it is appended as-is. Otherwise buffer
//! and window are concatenated into a working set and the most similar pair
//! is merged, repeatedly, until `E` frames remain. The merged frame takes the
//! lower slot and the higher slot is dropped, so surviving frames keep their
//! relative order. Merged frames stay eligible for further merges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simkernel::{cosine_with_norms, similarity_descriptor, DEFAULT_PE_SCALE};
use crate::tensor_io::{FeatureSequence, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// `(a + b) / 2` regardless of how many frames each side already holds.
    #[default]
    #[value(name = "plain")]
    Plain,
    /// Mean weighted by merge weight, i.e. the running mean of all sources.
    #[value(name = "weighted")]
    Weighted,
}

/// One greedy merge, recorded for provenance and oracle replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeEvent {
    /// Raw frames ingested when the merge happened (end of the current window).
    pub step: u64,
    pub kept_slot: usize,
    pub removed_slot: usize,
    /// Full-precision similarity of the merged pair.
    pub similarity: f64,
    /// Temporal indices of the two frames just before merging.
    pub kept_index: u64,
    pub removed_index: u64,
}

impl MergeEvent {
    pub fn index_distance(&self) -> u64 {
        self.kept_index.abs_diff(self.removed_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    pub window_size: usize,
    pub capacity: usize,
    pub pe_scale: f64,
    pub merge_mode: MergeMode,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window_size: 10,
            capacity: 20,
            pe_scale: DEFAULT_PE_SCALE,
            merge_mode: MergeMode::Plain,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.capacity == 0 {
            return Err(Error::Validation(format!(
                "window ({}) and capacity ({}) must be at least 1",
                self.window_size, self.capacity
            )));
        }
        if !(self.pe_scale >= 0.0 && self.pe_scale.is_finite()) {
            return Err(Error::Validation(format!("pe scale {} invalid", self.pe_scale)));
        }
        Ok(())
    }
}

/// Merges two frames of equal shape.
///
/// # Panics
///
/// On shape mismatch.
pub fn merge_frames(a: &Frame, b: &Frame, mode: MergeMode) -> Frame {
    assert_eq!(a.shape(), b.shape(), "merge of frames with different shapes");
    let (wa, wb) = (a.weight as f64, b.weight as f64);
    let total = wa + wb;
    let values = match mode {
        MergeMode::Plain => a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| ((x as f64 + y as f64) / 2.0) as f32)
            .collect(),
        MergeMode::Weighted => a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| ((wa * x as f64 + wb * y as f64) / total) as f32)
            .collect(),
    };
    let index = (wa * a.temporal_index as f64 + wb * b.temporal_index as f64) / total;
    Frame {
        values,
        tokens: a.tokens,
        channels: a.channels,
        temporal_index: index.round() as u64,
        weight: a.weight + b.weight,
    }
}

/// Greedy merge loop over a working set, with a cached similarity matrix.
struct Compressor {
    pe_scale: f64,
    mode: MergeMode,
    descriptors: Vec<Vec<f64>>,
    norms: Vec<f64>,
    // Full symmetric matrix; the diagonal is unused.
    sims: Vec<Vec<f64>>,
}

impl Compressor {
    fn new(frames: &[Frame], pe_scale: f64, mode: MergeMode) -> Self {
        let descriptors: Vec<Vec<f64>> = frames
            .iter()
            .map(|f| similarity_descriptor(f, pe_scale).0)
            .collect();
        let norms: Vec<f64> = descriptors.iter().map(|d| crate::simkernel::norm(d)).collect();
        let n = frames.len();
        let mut sims = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let s = cosine_with_norms(&descriptors[i], norms[i], &descriptors[j], norms[j]);
                sims[i][j] = s;
                sims[j][i] = s;
            }
        }
        Self {
            pe_scale,
            mode,
            descriptors,
            norms,
            sims,
        }
    }

    fn best(&self) -> (usize, usize, f64) {
        let n = self.sims.len();
        let mut best = (0, 1, f64::NEG_INFINITY);
        for i in 0..n {
            let row = &self.sims[i];
            for (j, &s) in row.iter().enumerate().skip(i + 1) {
                if s > best.2 {
                    best = (i, j, s);
                }
            }
        }
        best
    }

    fn run(&mut self, frames: &mut Vec<Frame>, capacity: usize, step: u64, log: &mut Vec<MergeEvent>) {
        while frames.len() > capacity {
            let (i, j, similarity) = self.best();
            log.push(MergeEvent {
                step,
                kept_slot: i,
                removed_slot: j,
                similarity,
                kept_index: frames[i].temporal_index,
                removed_index: frames[j].temporal_index,
            });
            frames[i] = merge_frames(&frames[i], &frames[j], self.mode);
            frames.remove(j);

            self.descriptors.remove(j);
            self.norms.remove(j);
            self.sims.remove(j);
            for row in &mut self.sims {
                row.remove(j);
            }
            self.descriptors[i] = similarity_descriptor(&frames[i], self.pe_scale).0;
            self.norms[i] = crate::simkernel::norm(&self.descriptors[i]);
            for k in 0..frames.len() {
                if k != i {
                    let s = cosine_with_norms(
                        &self.descriptors[i],
                        self.norms[i],
                        &self.descriptors[k],
                        self.norms[k],
                    );
                    self.sims[i][k] = s;
                    self.sims[k][i] = s;
                }
            }
        }
    }
}

fn compress_logged(
    frames: &mut Vec<Frame>,
    capacity: usize,
    pe_scale: f64,
    mode: MergeMode,
    step: u64,
    log: &mut Vec<MergeEvent>,
) {
    if frames.len() <= capacity {
        return;
    }
    Compressor::new(frames, pe_scale, mode).run(frames, capacity, step, log);
}

/// Reduces a working set to at most `capacity` frames by greedy pair merging.
/// Works on any uniform-shape vector list, including single-token queries.
pub fn eco_compress(
    working_set: Vec<Frame>,
    capacity: usize,
    pe_scale: f64,
    mode: MergeMode,
) -> Vec<Frame> {
    let mut frames = working_set;
    compress_logged(&mut frames, capacity.max(1), pe_scale, mode, 0, &mut Vec::new());
    frames
}

/// Bounded episode memory.
#[derive(Debug, Clone)]
pub struct EpisodeBuffer {
    episodes: Vec<Frame>,
    capacity: usize,
    pe_scale: f64,
    mode: MergeMode,
    merge_log: Vec<MergeEvent>,
    ingested: u64,
    peak_working_set: usize,
}

impl EpisodeBuffer {
    pub fn new(capacity: usize, pe_scale: f64, mode: MergeMode) -> Self {
        assert!(capacity >= 1, "episode capacity must be at least 1");
        Self {
            episodes: Vec::with_capacity(capacity),
            capacity,
            pe_scale,
            mode,
            merge_log: Vec::new(),
            ingested: 0,
            peak_working_set: 0,
        }
    }

    pub fn from_config(cfg: &StreamConfig) -> Self {
        Self::new(cfg.capacity, cfg.pe_scale, cfg.merge_mode)
    }

    pub fn episodes(&self) -> &[Frame] {
        &self.episodes
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn merge_log(&self) -> &[MergeEvent] {
        &self.merge_log
    }

    /// Raw frames seen so far.
    pub fn ingested(&self) -> u64 {
        self.ingested
    }

    /// Largest working set (buffer plus window) held at any point.
    pub fn peak_working_set(&self) -> usize {
        self.peak_working_set
    }

    /// Appends a window, compressing back to capacity when it does not fit.
    pub fn append_or_compress(&mut self, window: Vec<Frame>) -> Result<()> {
        let shape = self.episodes.first().or(window.first()).map(Frame::shape);
        if let Some(shape) = shape {
            if let Some(bad) = window.iter().find(|f| f.shape() != shape) {
                return Err(Error::Validation(format!(
                    "window frame {} has shape {:?}, buffer holds {:?}",
                    bad.temporal_index,
                    bad.shape(),
                    shape
                )));
            }
        }
        self.ingested += window.iter().map(|f| f.weight).sum::<u64>();
        self.episodes.extend(window);
        self.peak_working_set = self.peak_working_set.max(self.episodes.len());
        compress_logged(
            &mut self.episodes,
            self.capacity,
            self.pe_scale,
            self.mode,
            self.ingested,
            &mut self.merge_log,
        );
        Ok(())
    }

    pub fn into_parts(self) -> (Vec<Frame>, Vec<MergeEvent>) {
        (self.episodes, self.merge_log)
    }
}

/// Functional form of [`EpisodeBuffer::append_or_compress`].
pub fn buffer_append_or_compress(mut buffer: EpisodeBuffer, window: Vec<Frame>) -> Result<EpisodeBuffer> {
    buffer.append_or_compress(window)?;
    Ok(buffer)
}

#[derive(Debug, Clone)]
pub struct StreamOutput {
    pub episodes: FeatureSequence,
    pub merge_log: Vec<MergeEvent>,
    pub peak_working_set: usize,
}

/// Folds non-overlapping windows of `cfg.window_size` frames (the last one
/// possibly shorter) through an initially empty buffer.
pub fn stream_compress(seq: &FeatureSequence, cfg: &StreamConfig) -> Result<StreamOutput> {
    cfg.validate()?;
    let mut buffer = EpisodeBuffer::from_config(cfg);
    for window in seq.frames().chunks(cfg.window_size) {
        buffer.append_or_compress(window.to_vec())?;
    }
    let peak = buffer.peak_working_set();
    let (episodes, merge_log) = buffer.into_parts();
    Ok(StreamOutput {
        episodes: FeatureSequence::from_episodes(episodes)?,
        merge_log,
        peak_working_set: peak,
    })
}

/// Source positions folded into each output episode, rebuilt by replaying the
/// merge log over windows of `window_size` raw frames.
pub fn merge_sources(n: usize, window_size: usize, log: &[MergeEvent]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut events = log.iter().peekable();
    let mut ingested = 0u64;
    for start in (0..n).step_by(window_size.max(1)) {
        let end = (start + window_size).min(n);
        groups.extend((start..end).map(|i| vec![i]));
        ingested += (end - start) as u64;
        while let Some(ev) = events.next_if(|ev| ev.step == ingested) {
            let removed = groups.remove(ev.removed_slot);
            groups[ev.kept_slot].extend(removed);
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}
