use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

/// A signal cut into contiguous, non-overlapping windows of `seq_len`
/// samples. The last window is zero-padded; `padding` records how many
/// zeros were appended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceBatch {
    pub sequences: Vec<Vec<f64>>,
    pub seq_len: usize,
    pub offsets: Vec<usize>,
    pub padding: usize,
    pub source_len: usize,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Concatenates the windows and strips the padding.
    pub fn unframe(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.sequences.iter().flatten().copied().collect();
        out.truncate(self.source_len);
        out
    }
}

pub fn frame(signal: &Signal, seq_len: usize) -> Result<SequenceBatch> {
    if seq_len == 0 {
        return Err(Error::param("sequence length must be positive"));
    }
    if signal.is_empty() {
        return Err(Error::Empty("cannot frame an empty signal"));
    }
    let n = signal.len();
    let count = n.div_ceil(seq_len);
    let mut sequences = Vec::with_capacity(count);
    let mut offsets = Vec::with_capacity(count);
    for chunk_start in (0..n).step_by(seq_len) {
        let end = (chunk_start + seq_len).min(n);
        let mut window = signal.samples()[chunk_start..end].to_vec();
        window.resize(seq_len, 0.0);
        sequences.push(window);
        offsets.push(chunk_start);
    }
    Ok(SequenceBatch {
        sequences,
        seq_len,
        offsets,
        padding: count * seq_len - n,
        source_len: n,
    })
}
