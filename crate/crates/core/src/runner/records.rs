use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::RunError;
use crate::data::DistributionKind;
use crate::types::ItemId;

/// Everything one trial produced: both PC legs for one (sample, strategy).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// `{distribution}/{K}/{strategy}/{sample}/{trial}`.
    pub key: String,
    pub distribution: DistributionKind,
    pub k: usize,
    pub strategy: String,
    pub sample_index: usize,
    pub user_id: String,
    pub trial: usize,
    /// False for intertwined cells, whose first leg is the list as built.
    pub shuffled_input: bool,
    pub shuffled_order: Vec<ItemId>,
    pub reversed_order: Vec<ItemId>,
    /// One entry per output (bootstrap: per group); `None` when unrepairable.
    pub shuffled_outputs: Vec<Option<Vec<ItemId>>>,
    pub reversed_outputs: Vec<Option<Vec<ItemId>>>,
    pub ground_truth: Vec<ItemId>,
    /// Outputs that needed repairs or re-prompts.
    pub repaired_outputs: usize,
    pub errors: Vec<String>,
    /// Set when the backend failed outright; outputs are then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
    pub calls: usize,
}

impl TrialRecord {
    pub fn make_key(distribution: DistributionKind, k: usize, strategy: &str, sample: usize, trial: usize) -> String {
        format!("{}/{k}/{strategy}/{sample}/{trial}", distribution.as_str())
    }

    pub fn failed_outputs(&self) -> usize {
        self.shuffled_outputs
            .iter()
            .chain(&self.reversed_outputs)
            .filter(|o| o.is_none())
            .count()
    }
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(RunError::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            // A torn final line from an interrupted append is dropped.
            Err(e) if e.is_eof() => log::warn!("{}: ignoring truncated line {}", path.display(), i + 1),
            Err(e) => return Err(RunError::Corrupt(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

/// Appends whole lines with a single write so a crash never splits a record
/// across two lines.
pub(crate) fn append_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), RunError> {
    if items.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).map_err(|e| RunError::Corrupt(e.to_string()))?;
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| RunError::io(path, e))?;
    f.write_all(&buf)
        .and_then(|_| f.flush())
        .map_err(|e| RunError::io(path, e))
}

/// Cuts a partial last line left by an interrupted append.
pub(crate) fn trim_torn_tail(path: &Path) -> Result<(), RunError> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(RunError::io(path, e)),
    };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new()
        .write(true)
        .open(path)
        .map_err(|e| RunError::io(path, e))?;
    f.set_len(keep as u64).map_err(|e| RunError::io(path, e))
}
