//! JSON-lines export/import of evaluation samples, one sample per line.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{DataError, DistributionKind, DrawnSample};
use crate::types::{CandidateList, EvalSample, HistoryEntry, InteractionHistory, ItemId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLine {
    pub user_id: String,
    pub history: Vec<HistoryEntry>,
    pub candidates: Vec<ItemId>,
    pub ground_truth: Vec<ItemId>,
    pub distribution: DistributionKind,
    pub seed: u64,
    /// Display titles; ids without an entry render as themselves.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub titles: BTreeMap<ItemId, String>,
}

impl From<&DrawnSample> for SampleLine {
    fn from(d: &DrawnSample) -> Self {
        SampleLine {
            user_id: d.sample.user_id().to_owned(),
            history: d.sample.history().entries().to_vec(),
            candidates: d.sample.candidates().ids().to_vec(),
            ground_truth: d.sample.ground_truth().to_vec(),
            distribution: d.distribution,
            seed: d.seed,
            titles: d.sample.titles().clone(),
        }
    }
}

impl SampleLine {
    pub fn into_drawn(self) -> Result<DrawnSample, String> {
        let history = InteractionHistory::new(self.history).map_err(|e| e.to_string())?;
        let candidates = CandidateList::new(self.candidates).map_err(|e| e.to_string())?;
        let sample = EvalSample::new(self.user_id, history, candidates, self.ground_truth, self.titles)
            .map_err(|e| e.to_string())?;
        Ok(DrawnSample {
            sample,
            distribution: self.distribution,
            seed: self.seed,
        })
    }
}

pub fn export_samples<W: Write>(mut out: W, samples: &[DrawnSample]) -> std::io::Result<()> {
    for s in samples {
        let line = serde_json::to_string(&SampleLine::from(s)).map_err(std::io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn import_samples<R: BufRead>(input: R) -> Result<Vec<DrawnSample>, DataError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: "<samples>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DataError::BadSample { line: i + 1, reason };
        let parsed: SampleLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.push(parsed.into_drawn().map_err(bad)?);
    }
    Ok(out)
}
