//! Semantic retriever: keep every k-th frame as an anchor and fold every
//! other frame into the anchor it most resembles.
//!
//! Similarity is the dot product of L2-normalized flattened frames, without
//! positional encoding. Outputs are equal-weight means of each anchor group,
//! taken over the original (unnormalized) values.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::simkernel::{dot, flatten_descriptor, l2_normalize};
use crate::tensor_io::{FeatureSequence, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetrConfig {
    pub stride: usize,
}

impl SetrConfig {
    pub fn with_stride(stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::Validation("stride must be at least 1".into()));
        }
        Ok(Self { stride })
    }

    /// `k = round(1 / ratio)`, clamped to at least 1.
    pub fn from_keep_ratio(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Validation(format!("keep ratio {ratio} not in (0, 1]")));
        }
        Ok(Self {
            stride: ((1.0 / ratio).round() as usize).max(1),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SemanticAssignment {
    pub anchors: Vec<usize>,
    pub donors: Vec<usize>,
    /// donor position -> anchor position
    pub assignment: BTreeMap<usize, usize>,
}

impl SemanticAssignment {
    /// `[donor, anchor]` pairs in donor order, as written to reports.
    pub fn pairs(&self) -> Vec<[u64; 2]> {
        self.assignment
            .iter()
            .map(|(&d, &a)| [d as u64, a as u64])
            .collect()
    }
}

pub fn stride_partition(n: usize, stride: usize) -> SemanticAssignment {
    assert!(stride >= 1, "stride must be at least 1");
    let (anchors, donors) = (0..n).partition(|i| i % stride == 0);
    SemanticAssignment {
        anchors,
        donors,
        assignment: BTreeMap::new(),
    }
}

fn normalized(frame: &Frame) -> Vec<f64> {
    l2_normalize(&flatten_descriptor(frame)).0
}

/// Maps every donor to its most similar anchor; ties go to the earliest anchor.
pub fn assign_semantics(seq: &FeatureSequence, part: &SemanticAssignment) -> Result<SemanticAssignment> {
    let n = seq.len();
    if let Some(&bad) = part.anchors.iter().chain(&part.donors).find(|&&i| i >= n) {
        return Err(Error::Validation(format!("partition index {bad} out of range for {n} frames")));
    }
    if part.anchors.is_empty() && !part.donors.is_empty() {
        return Err(Error::Validation("donors without anchors".into()));
    }
    let anchor_vecs: Vec<Vec<f64>> = part.anchors.iter().map(|&a| normalized(&seq.frames()[a])).collect();
    let mut assignment = BTreeMap::new();
    for &donor in &part.donors {
        let y = normalized(&seq.frames()[donor]);
        let mut best = (part.anchors[0], f64::NEG_INFINITY);
        for (&anchor, x) in part.anchors.iter().zip(&anchor_vecs) {
            let s = dot(&y, x);
            if s > best.1 {
                best = (anchor, s);
            }
        }
        assignment.insert(donor, best.0);
    }
    Ok(SemanticAssignment {
        anchors: part.anchors.clone(),
        donors: part.donors.clone(),
        assignment,
    })
}

/// One output per anchor: the mean of the anchor and its donors, accumulated
/// in ascending position order. The output keeps the anchor's temporal index.
pub fn group_means(seq: &FeatureSequence, assigned: &SemanticAssignment) -> Result<FeatureSequence> {
    fold_groups(seq, &assigned.anchors, assigned.assignment.iter().map(|(&d, &a)| (d, a)))
}

fn fold_groups(
    seq: &FeatureSequence,
    anchors: &[usize],
    pairs: impl IntoIterator<Item = (usize, usize)>,
) -> Result<FeatureSequence> {
    let dim = seq.frame_len();
    let slot: BTreeMap<usize, usize> = anchors.iter().enumerate().map(|(s, &a)| (a, s)).collect();
    let mut members: Vec<Vec<usize>> = anchors.iter().map(|&a| vec![a]).collect();
    for (donor, anchor) in pairs {
        let s = *slot
            .get(&anchor)
            .ok_or_else(|| Error::Validation(format!("donor {donor} mapped to non-anchor {anchor}")))?;
        members[s].push(donor);
    }
    let frames = anchors
        .iter()
        .zip(members.iter_mut())
        .map(|(&anchor, group)| {
            group.sort_unstable();
            let mut acc = vec![0.0f64; dim];
            for &m in group.iter() {
                for (a, &v) in acc.iter_mut().zip(&seq.frames()[m].values) {
                    *a += v as f64;
                }
            }
            let count = group.len() as f64;
            let src = &seq.frames()[anchor];
            Frame {
                values: acc.iter().map(|a| (a / count) as f32).collect(),
                tokens: src.tokens,
                channels: src.channels,
                temporal_index: src.temporal_index,
                weight: group.iter().map(|&m| seq.frames()[m].weight).sum(),
            }
        })
        .collect();
    FeatureSequence::from_episodes(frames)
}

/// Reduces `N` frames to `ceil(N / k)` semantic frames.
pub fn setr_compress(seq: &FeatureSequence, cfg: &SetrConfig) -> Result<(FeatureSequence, SemanticAssignment)> {
    let stride = SetrConfig::with_stride(cfg.stride)?.stride;
    let assigned = assign_semantics(seq, &stride_partition(seq.len(), stride))?;
    let out = group_means(seq, &assigned)?;
    Ok((out, assigned))
}
