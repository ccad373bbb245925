//! Run report written by every CLI command given `--report`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eco::MergeEvent;
use crate::tensor_io::FeatureSequence;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub n: u64,
    pub t: u64,
    pub c: u64,
}

impl InputDims {
    pub fn of(seq: &FeatureSequence) -> Self {
        Self {
            n: seq.len() as u64,
            t: seq.tokens() as u64,
            c: seq.channels() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDims {
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeLogEntry {
    pub step: u64,
    pub kept: u64,
    pub removed: u64,
    pub similarity: f64,
}

impl From<&MergeEvent> for MergeLogEntry {
    fn from(ev: &MergeEvent) -> Self {
        Self {
            step: ev.step,
            kept: ev.kept_slot as u64,
            removed: ev.removed_slot as u64,
            similarity: ev.similarity,
        }
    }
}

/// Field order here is the serialized key order; maps are sorted by key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub input: InputDims,
    pub output: OutputDims,
    pub metrics: BTreeMap<String, f64>,
    pub timing_ms: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_buffer_frames: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_log: Option<Vec<MergeLogEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setr_assignment: Option<Vec<[u64; 2]>>,
}

impl EvalReport {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            command: command.into(),
            config: BTreeMap::new(),
            input: InputDims::default(),
            output: OutputDims::default(),
            metrics: BTreeMap::new(),
            timing_ms: BTreeMap::new(),
            seed: None,
            peak_buffer_frames: None,
            merge_log: None,
            setr_assignment: None,
        }
    }

    pub fn with_config(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn set_merge_log(&mut self, log: &[MergeEvent]) {
        self.merge_log = Some(log.iter().map(MergeLogEntry::from).collect());
    }
}
