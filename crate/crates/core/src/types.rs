//! Domain types shared by every stage of the pipeline: items, candidate
//! lists, interaction histories, evaluation samples and validated rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque item identifier. MovieLens numeric ids and Amazon ASINs share this type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        ItemId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        ItemId(s.to_owned())
    }
}

impl From<String> for ItemId {
    fn from(s: String) -> Self {
        ItemId(s)
    }
}

/// Convenience for tests and fixtures.
pub fn ids<S: AsRef<str>>(raw: &[S]) -> Vec<ItemId> {
    raw.iter().map(|s| ItemId::new(s.as_ref())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    pub title: String,
    /// Interaction count.
    pub popularity: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("candidate list contains duplicate id `{0}`")]
    DuplicateCandidate(ItemId),
    #[error("interaction history is empty")]
    EmptyHistory,
    #[error("history item `{0}` also appears among the candidates")]
    HistoryOverlap(ItemId),
    #[error("ground truth must hold exactly 3 ids, got {0}")]
    GroundTruthSize(usize),
    #[error("ground-truth item `{0}` is not a candidate")]
    GroundTruthNotCandidate(ItemId),
    #[error("rating {0} outside 1..=5")]
    Rating(u8),
}

/// The K items presented to the ranker. Order is the prompt order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemId>", into = "Vec<ItemId>")]
pub struct CandidateList {
    ids: Vec<ItemId>,
}

impl CandidateList {
    pub fn new(ids: Vec<ItemId>) -> Result<Self, TypeError> {
        if ids.is_empty() {
            return Err(TypeError::EmptyCandidates);
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(TypeError::DuplicateCandidate(id.clone()));
            }
        }
        Ok(CandidateList { ids })
    }

    pub(crate) fn from_unchecked(ids: Vec<ItemId>) -> Self {
        debug_assert!(!ids.is_empty());
        CandidateList { ids }
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.ids.contains(id)
    }

    pub fn id_set(&self) -> BTreeSet<&ItemId> {
        self.ids.iter().collect()
    }

    /// Same ids in exactly reversed order.
    pub fn reversed(&self) -> CandidateList {
        crate::order::reverse(self)
    }

    /// Whether `other` holds exactly the same ids, in any order.
    pub fn same_items(&self, other: &CandidateList) -> bool {
        self.len() == other.len() && self.id_set() == other.id_set()
    }
}

impl TryFrom<Vec<ItemId>> for CandidateList {
    type Error = TypeError;
    fn try_from(v: Vec<ItemId>) -> Result<Self, Self::Error> {
        CandidateList::new(v)
    }
}

impl From<CandidateList> for Vec<ItemId> {
    fn from(c: CandidateList) -> Self {
        c.ids
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub id: ItemId,
    pub rating: u8,
    #[serde(default)]
    pub timestamp: i64,
}

/// Items the user interacted with, most preferred first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<HistoryEntry>", into = "Vec<HistoryEntry>")]
pub struct InteractionHistory {
    entries: Vec<HistoryEntry>,
}

impl InteractionHistory {
    pub fn new(entries: Vec<HistoryEntry>) -> Result<Self, TypeError> {
        if entries.is_empty() {
            return Err(TypeError::EmptyHistory);
        }
        if let Some(bad) = entries.iter().find(|e| !(1..=5).contains(&e.rating)) {
            return Err(TypeError::Rating(bad.rating));
        }
        Ok(InteractionHistory { entries })
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<Vec<HistoryEntry>> for InteractionHistory {
    type Error = TypeError;
    fn try_from(v: Vec<HistoryEntry>) -> Result<Self, Self::Error> {
        InteractionHistory::new(v)
    }
}

impl From<InteractionHistory> for Vec<HistoryEntry> {
    fn from(h: InteractionHistory) -> Self {
        h.entries
    }
}

/// One user's history, the candidate list and its three ground-truth items.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    user_id: String,
    history: InteractionHistory,
    candidates: CandidateList,
    /// Most preferred first.
    ground_truth: Vec<ItemId>,
    titles: BTreeMap<ItemId, String>,
}

pub const GROUND_TRUTH_SIZE: usize = 3;

impl EvalSample {
    pub fn new(
        user_id: impl Into<String>,
        history: InteractionHistory,
        candidates: CandidateList,
        ground_truth: Vec<ItemId>,
        titles: BTreeMap<ItemId, String>,
    ) -> Result<Self, TypeError> {
        if ground_truth.len() != GROUND_TRUTH_SIZE
            || ground_truth.iter().collect::<BTreeSet<_>>().len() != GROUND_TRUTH_SIZE
        {
            return Err(TypeError::GroundTruthSize(ground_truth.len()));
        }
        if let Some(g) = ground_truth.iter().find(|g| !candidates.contains(g)) {
            return Err(TypeError::GroundTruthNotCandidate(g.clone()));
        }
        if let Some(h) = history.entries().iter().find(|h| candidates.contains(&h.id)) {
            return Err(TypeError::HistoryOverlap(h.id.clone()));
        }
        Ok(EvalSample {
            user_id: user_id.into(),
            history,
            candidates,
            ground_truth,
            titles,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn history(&self) -> &InteractionHistory {
        &self.history
    }

    pub fn candidates(&self) -> &CandidateList {
        &self.candidates
    }

    pub fn ground_truth(&self) -> &[ItemId] {
        &self.ground_truth
    }

    pub fn titles(&self) -> &BTreeMap<ItemId, String> {
        &self.titles
    }

    /// Display title, falling back to the id itself.
    pub fn title<'a>(&'a self, id: &'a ItemId) -> &'a str {
        self.titles.get(id).map(String::as_str).unwrap_or(id.as_str())
    }
}

/// What a ranker did to produce its output beyond a clean parse.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairFlags {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_appended: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hallucinated_dropped: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub duplicates_dropped: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truncated: Vec<ItemId>,
    /// Lines matched by normalized or fuzzy title rather than verbatim.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inexact_matches: Vec<ItemId>,
    /// List numbering did not run 1, 2, 3, ... in line order.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub renumbered: bool,
    /// Re-prompts issued before an acceptable answer arrived.
    #[serde(default)]
    pub retries: u32,
}

impl RepairFlags {
    /// True when the output needed no edits (retries excluded).
    pub fn is_clean(&self) -> bool {
        self.missing_appended.is_empty()
            && self.hallucinated_dropped.is_empty()
            && self.duplicates_dropped.is_empty()
            && self.truncated.is_empty()
            && self.inexact_matches.is_empty()
            && !self.renumbered
    }

    pub fn merge(&mut self, other: RepairFlags) {
        self.missing_appended.extend(other.missing_appended);
        self.hallucinated_dropped.extend(other.hallucinated_dropped);
        self.duplicates_dropped.extend(other.duplicates_dropped);
        self.truncated.extend(other.truncated);
        self.inexact_matches.extend(other.inexact_matches);
        self.renumbered |= other.renumbered;
        self.retries += other.retries;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: String,
    pub seed: u64,
    pub repairs: RepairFlags,
}

/// A validated permutation of a candidate list. Only obtainable through
/// [`crate::order::validate_ranking`] or strategy outputs built on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking {
    ids: Vec<ItemId>,
    provenance: Provenance,
}

impl Ranking {
    pub(crate) fn from_validated(ids: Vec<ItemId>) -> Self {
        Ranking {
            ids,
            provenance: Provenance::default(),
        }
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn into_ids(self) -> Vec<ItemId> {
        self.ids
    }

    /// The ranking as a candidate list (rank order becomes presentation order).
    pub fn to_candidates(&self) -> CandidateList {
        CandidateList::from_unchecked(self.ids.clone())
    }
}
