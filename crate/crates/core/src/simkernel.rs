//! Similarity primitives shared by every compressor and by the reference
//! implementation in [`crate::eval`].
//!
//! All arithmetic is 64-bit and accumulates in ascending index order, so a
//! given pair of inputs yields the same bits on every call and in either
//! argument order.

use crate::tensor_io::Frame;

/// Norms below this are treated as zero vectors.
pub const ZERO_NORM: f64 = 1e-12;
/// Added to the cosine denominator; zero vectors get similarity 0.
pub const COSINE_GUARD: f64 = 1e-12;
pub const DEFAULT_PE_SCALE: f64 = 0.1;

/// A frame flattened to one 64-bit vector of length T·C.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub Vec<f64>);

impl Descriptor {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

/// Winning pair of a best-pair search, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairChoice {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
}

pub fn flatten_descriptor(frame: &Frame) -> Descriptor {
    Descriptor(frame.values.iter().map(|&v| v as f64).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "descriptor length mismatch");
    let mut acc = 0.0;
    for k in 0..a.len() {
        acc += a[k] * b[k];
    }
    acc
}

pub fn norm(a: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &x in a {
        acc += x * x;
    }
    acc.sqrt()
}

pub fn l2_normalize(d: &Descriptor) -> Descriptor {
    let n = d.norm();
    if n < ZERO_NORM {
        return d.clone();
    }
    Descriptor(d.0.iter().map(|x| x / n).collect())
}

/// Cosine with precomputed norms; bit-identical to [`cosine`] when the norms
/// come from [`Descriptor::norm`]. Clamped to `[-1, 1]` against rounding.
#[inline]
pub fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    (dot(a, b) / (norm_a * norm_b + COSINE_GUARD)).clamp(-1.0, 1.0)
}

/// # Panics
///
/// If the descriptors differ in length.
pub fn cosine(a: &Descriptor, b: &Descriptor) -> f64 {
    cosine_with_norms(&a.0, a.norm(), &b.0, b.norm())
}

/// Exhaustive arg-max of pairwise cosine over `i < j`.
///
/// Ties keep the first pair met in `(i, j)` lexicographic order.
///
/// # Panics
///
/// With fewer than two descriptors.
pub fn best_pair(descriptors: &[Descriptor]) -> PairChoice {
    assert!(descriptors.len() >= 2, "best_pair needs at least two descriptors");
    let norms: Vec<f64> = descriptors.iter().map(Descriptor::norm).collect();
    let mut best = PairChoice {
        i: 0,
        j: 1,
        similarity: f64::NEG_INFINITY,
    };
    for i in 0..descriptors.len() {
        for j in i + 1..descriptors.len() {
            let s = cosine_with_norms(&descriptors[i].0, norms[i], &descriptors[j].0, norms[j]);
            if s > best.similarity {
                best = PairChoice { i, j, similarity: s };
            }
        }
    }
    best
}

/// Sinusoidal encoding: entry `2m` is `sin(p / 10000^(2m/dim))`, entry
/// `2m+1` the matching cosine.
pub fn sinusoidal_pe(position: u64, dim: usize) -> Descriptor {
    let p = position as f64;
    let values = (0..dim)
        .map(|k| {
            let m2 = (k - k % 2) as f64;
            let angle = p / 10000f64.powf(m2 / dim as f64);
            if k % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect();
    Descriptor(values)
}

/// Normalized flattened frame plus `pe_scale` times its positional encoding.
/// Only the descriptor carries position; frame values are never touched.
pub fn similarity_descriptor(frame: &Frame, pe_scale: f64) -> Descriptor {
    let mut d = l2_normalize(&flatten_descriptor(frame));
    if pe_scale != 0.0 {
        let pe = sinusoidal_pe(frame.temporal_index, d.len());
        for (x, e) in d.0.iter_mut().zip(pe.0) {
            *x += pe_scale * e;
        }
    }
    d
}
