//! Memory-bounded streaming compression for sequences of feature frames.
//!
//! The crate is organised around one value type, [`FeatureSequence`], and a
//! handful of compressors that reduce it:
//!
//! - [`eco`]: the episodic compressor, a bounded buffer fed window by window
//!   that greedily merges its most similar pair of frames until it fits.
//! - [`setr`]: the semantic retriever, which keeps every k-th frame as an
//!   anchor and folds every other frame into its most similar anchor.
//! - [`baselines`]: FIFO, random, uniform, pooling and k-means reductions.
//!
//! [`eval`] carries the brute-force reference compressor, quality metrics and
//! the benchmark driver; [`cli`] binds everything to the `episodic` binary.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod eval;
pub mod eco;
pub mod report;
pub mod rng;
pub mod setr;
pub mod simkernel;
pub mod tensor_io;

pub use error::{Error, Result};
pub use tensor_io::{FeatureSequence, Frame, SyntheticSpec};
