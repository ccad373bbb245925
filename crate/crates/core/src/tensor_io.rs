//! Feature frames, the FSEQ1 file format and the synthetic stream generator.
//!
//! FSEQ1 layout (all little-endian):
//!
//! | bytes   | content                          |
//! |---------|----------------------------------|
//! | 0..6    | magic `FSEQ1\0`                  |
//! | 6..10   | `u32` frame count N              |
//! | 10..14  | `u32` tokens per frame T         |
//! | 14..18  | `u32` channels C                 |
//! | 18..    | N·T·C `f32`, frame, token, channel major-to-minor |
//!
//! Weights and temporal indices are not stored; a file always reads back as a
//! raw sequence with weights 1 and indices `0..N`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::EvalReport;
use crate::rng::SplitMix64;

pub const MAGIC: &[u8; 6] = b"FSEQ1\0";
pub const HEADER_LEN: usize = 18;

/// One T×C grid of features.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub values: Vec<f32>,
    pub tokens: usize,
    pub channels: usize,
    /// Position in the source stream; merged frames carry the rounded
    /// weight-weighted mean of their sources.
    pub temporal_index: u64,
    /// Number of raw frames folded into this one.
    pub weight: u64,
}

impl Frame {
    pub fn raw(values: Vec<f32>, tokens: usize, channels: usize, temporal_index: u64) -> Self {
        Self {
            values,
            tokens,
            channels,
            temporal_index,
            weight: 1,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.tokens, self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.tokens * self.channels {
            return Err(Error::Validation(format!(
                "frame holds {} values, shape {}x{}",
                self.values.len(),
                self.tokens,
                self.channels
            )));
        }
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at offset {pos} of frame {}",
                self.values[pos], self.temporal_index
            )));
        }
        if self.weight == 0 {
            return Err(Error::Validation("frame weight must be at least 1".into()));
        }
        Ok(())
    }
}

/// A non-empty ordered list of equally shaped frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<Frame>,
    tokens: usize,
    channels: usize,
}

impl FeatureSequence {
    /// Builds a sequence of source frames: shapes must agree, values must be
    /// finite and temporal indices strictly increasing.
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let seq = Self::from_episodes(frames)?;
        for pair in seq.frames.windows(2) {
            if pair[1].temporal_index <= pair[0].temporal_index {
                return Err(Error::Validation(format!(
                    "temporal indices not strictly increasing: {} then {}",
                    pair[0].temporal_index, pair[1].temporal_index
                )));
            }
        }
        Ok(seq)
    }

    /// Builds a sequence of compressor outputs. Merged frames may share or
    /// reorder temporal indices, so only shape and value checks apply.
    pub fn from_episodes(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Validation("sequence has no frames".into()))?;
        let (tokens, channels) = first.shape();
        if tokens == 0 || channels == 0 {
            return Err(Error::Validation(format!("degenerate shape {tokens}x{channels}")));
        }
        for frame in &frames {
            if frame.shape() != (tokens, channels) {
                return Err(Error::Validation(format!(
                    "frame {} has shape {:?}, expected {:?}",
                    frame.temporal_index,
                    frame.shape(),
                    (tokens, channels)
                )));
            }
            frame.validate()?;
        }
        Ok(Self {
            frames,
            tokens,
            channels,
        })
    }

    /// Splits a flat frame-major buffer into raw frames indexed `0..N`.
    pub fn from_flat(data: &[f32], tokens: usize, channels: usize) -> Result<Self> {
        let stride = tokens * channels;
        if stride == 0 || data.is_empty() || !data.len().is_multiple_of(stride) {
            return Err(Error::Validation(format!(
                "{} values do not split into {tokens}x{channels} frames",
                data.len()
            )));
        }
        let frames = data
            .chunks_exact(stride)
            .enumerate()
            .map(|(i, chunk)| Frame::raw(chunk.to_vec(), tokens, channels, i as u64))
            .collect();
        Self::new(frames)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frame_len(&self) -> usize {
        self.tokens * self.channels
    }

    pub fn total_weight(&self) -> u64 {
        self.frames.iter().map(|f| f.weight).sum()
    }

    /// Subsequence of whole frames by position, cloned as-is.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        Self::from_episodes(positions.iter().map(|&p| self.frames[p].clone()).collect())
    }
}

/// Encodes a sequence as FSEQ1 bytes.
pub fn encode_feature_bytes(seq: &FeatureSequence) -> Result<Vec<u8>> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| Error::Validation(format!("{name}={v} exceeds u32")))
    };
    let n = dim(seq.len(), "N")?;
    let t = dim(seq.tokens(), "T")?;
    let c = dim(seq.channels(), "C")?;
    let mut out = Vec::with_capacity(HEADER_LEN + seq.len() * seq.frame_len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for frame in seq.frames() {
        for v in &frame.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes FSEQ1 bytes into a raw sequence.
pub fn decode_feature_bytes(bytes: &[u8]) -> Result<FeatureSequence> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= MAGIC.len() && &bytes[..MAGIC.len()] == MAGIC {
            return Err(Error::Format(format!("header truncated at {} bytes", bytes.len())));
        }
        return Err(Error::Format("missing FSEQ1 magic".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..MAGIC.len()])
        )));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (n, t, c) = (word(6), word(10), word(14));
    if n == 0 || t == 0 || c == 0 {
        return Err(Error::Validation(format!("empty dimensions N={n} T={t} C={c}")));
    }
    let expected = n as u64 * t as u64 * c as u64 * 4;
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found != expected {
        if found < expected {
            return Err(Error::Length { expected, found });
        }
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            found - expected
        )));
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    FeatureSequence::from_flat(&data, t, c)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_bytes(&bytes)
}

pub fn write_feature_file(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_feature_bytes(seq)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parameters of a synthetic clustered stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_clusters: usize,
    pub frames_per_cluster: usize,
    pub tokens: usize,
    pub channels: usize,
    /// Expected L2 norm of the noise added to each frame; each entry draws
    /// with standard deviation `noise_sigma / sqrt(T·C)`.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Largest allowed cosine between two generated cluster centers.
pub const MAX_CENTER_COSINE: f64 = 0.2;
const CENTER_RETRIES: usize = 1000;

impl SyntheticSpec {
    fn check(&self) -> Result<()> {
        if self.num_clusters == 0 || self.frames_per_cluster == 0 {
            return Err(Error::Validation("clusters and frames per cluster must be positive".into()));
        }
        if self.tokens == 0 || self.channels == 0 {
            return Err(Error::Validation("T and C must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!("noise sigma {} invalid", self.noise_sigma)));
        }
        Ok(())
    }

    /// Unit-norm cluster centers, pairwise cosine at most [`MAX_CENTER_COSINE`].
    ///
    /// Centers are Gaussian draws orthogonalized against the ones before them
    /// while the dimension allows; past that they are plain normalized draws,
    /// redrawn from a fresh sub-seed until separated.
    pub fn centers(&self) -> Result<Vec<Vec<f64>>> {
        self.check()?;
        let dim = self.tokens * self.channels;
        let mut rng = SplitMix64::new(self.seed);
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(self.num_clusters);
        for b in 0..self.num_clusters {
            let mut accepted = None;
            for _ in 0..CENTER_RETRIES {
                let mut sub = rng.fork();
                let mut v: Vec<f64> = (0..dim).map(|_| sub.next_gaussian()).collect();
                if centers.len() < dim {
                    for c in &centers {
                        let proj: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(c).for_each(|(a, b)| *a -= proj * b);
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-9 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= norm);
                let separated = centers.iter().all(|c| {
                    let cos: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                    cos <= MAX_CENTER_COSINE
                });
                if separated {
                    accepted = Some(v);
                    break;
                }
            }
            match accepted {
                Some(v) => centers.push(v),
                None => {
                    return Err(Error::Validation(format!(
                        "could not place center {b} of {} in dimension {dim} with cosine <= {MAX_CENTER_COSINE}",
                        self.num_clusters
                    )))
                }
            }
        }
        Ok(centers)
    }
}

/// Contiguous blocks of noisy copies of well-separated unit centers.
pub fn gen_episode_stream(spec: &SyntheticSpec) -> Result<FeatureSequence> {
    let centers = spec.centers()?;
    let dim = spec.tokens * spec.channels;
    let entry_sigma = spec.noise_sigma / (dim as f64).sqrt();
    let mut noise = SplitMix64::new(spec.seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let mut frames = Vec::with_capacity(spec.num_clusters * spec.frames_per_cluster);
    for center in &centers {
        for _ in 0..spec.frames_per_cluster {
            let values = center
                .iter()
                .map(|&c| {
                    if entry_sigma > 0.0 {
                        (c + entry_sigma * noise.next_gaussian()) as f32
                    } else {
                        c as f32
                    }
                })
                .collect();
            let index = frames.len() as u64;
            frames.push(Frame::raw(values, spec.tokens, spec.channels, index));
        }
    }
    FeatureSequence::new(frames)
}

/// Canonical JSON bytes of a report: fixed key order, trailing newline.
pub fn encode_report(report: &EvalReport) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_report(report)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvalReport> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}
