#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use posbias_core::backend::{
    parse_and_match, Backend, BackendError, Completion, CompletionRequest, ParsePolicy, Parsed, SimulatorBackend,
    SimulatorPreset,
};
use posbias_core::data::{draw_samples, synthetic_catalog, Catalog, DistributionKind, DrawnSample, SyntheticSpec};
use posbias_core::types::{ids, CandidateList, ItemId};

#[derive(Deserialize)]
pub struct Fixtures {
    pub pool: Vec<(String, String)>,
    pub malformed: Vec<Case>,
    pub clean: Vec<Case>,
}

#[derive(Deserialize)]
pub struct Case {
    pub name: String,
    pub response: String,
    pub expected: usize,
    pub ids: Vec<String>,
    #[serde(default)]
    pub missing: Vec<String>,
    #[serde(default)]
    pub hallucinated: Vec<String>,
    #[serde(default)]
    pub duplicates: Vec<String>,
    #[serde(default)]
    pub truncated: Vec<String>,
    #[serde(default)]
    pub inexact: Vec<String>,
    #[serde(default)]
    pub renumbered: bool,
}

pub fn fixtures() -> Fixtures {
    serde_json::from_str(include_str!("../fixtures/parser_cases.json")).expect("fixture file parses")
}

impl Fixtures {
    pub fn pool(&self) -> (CandidateList, BTreeMap<ItemId, String>) {
        let list = CandidateList::new(self.pool.iter().map(|(id, _)| ItemId::new(id.as_str())).collect()).unwrap();
        let titles = self
            .pool
            .iter()
            .map(|(id, t)| (ItemId::new(id.as_str()), t.clone()))
            .collect();
        (list, titles)
    }
}

/// Checks one case in both policies; `Err` describes the first mismatch.
pub fn check_case(
    case: &Case,
    pool: &CandidateList,
    titles: &BTreeMap<ItemId, String>,
    malformed: bool,
) -> Result<(), String> {
    let repaired: Parsed = parse_and_match(&case.response, case.expected, pool, titles, ParsePolicy::Repair)
        .map_err(|e| format!("{}: repair mode failed: {e}", case.name))?;
    let want = |v: &[String]| ids(v);
    let r = &repaired.repairs;
    let checks = [
        ("ids", repaired.ids == want(&case.ids)),
        ("missing", r.missing_appended == want(&case.missing)),
        ("hallucinated", r.hallucinated_dropped == case.hallucinated),
        ("duplicates", r.duplicates_dropped == want(&case.duplicates)),
        ("truncated", r.truncated == want(&case.truncated)),
        ("inexact", r.inexact_matches == want(&case.inexact)),
        ("renumbered", r.renumbered == case.renumbered),
    ];
    if let Some((what, _)) = checks.iter().find(|(_, ok)| !ok) {
        return Err(format!(
            "{}: {what} mismatch, got {:?} / {:?}",
            case.name, repaired.ids, r
        ));
    }
    if case.expected >= pool.len() {
        posbias_core::order::validate_ranking(&repaired.ids, pool)
            .map_err(|v| format!("{}: not a permutation: {v}", case.name))?;
    } else {
        let distinct: std::collections::BTreeSet<_> = repaired.ids.iter().collect();
        if repaired.ids.len() != case.expected || distinct.len() != case.expected {
            return Err(format!("{}: selection of wrong size", case.name));
        }
    }
    if malformed == r.is_clean() {
        return Err(format!("{}: clean flag is {}", case.name, r.is_clean()));
    }
    let strict = parse_and_match(&case.response, case.expected, pool, titles, ParsePolicy::Strict);
    match (malformed, strict) {
        (true, Ok(p)) => Err(format!("{}: strict mode accepted {:?}", case.name, p.ids)),
        (false, Err(e)) => Err(format!("{}: strict mode rejected a clean answer: {e}", case.name)),
        (false, Ok(p)) if p.ids != repaired.ids => Err(format!("{}: strict and repair disagree", case.name)),
        _ => Ok(()),
    }
}

/// Wraps a backend and counts `complete` calls.
pub struct Counting<B> {
    pub inner: B,
    pub calls: AtomicUsize,
}

impl<B> Counting<B> {
    pub fn new(inner: B) -> Self {
        Counting {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<B: Backend> Backend for Counting<B> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

/// Answers with a fixed queue of texts, then repeats the last one.
pub struct Scripted {
    pub replies: Mutex<Vec<String>>,
}

impl Scripted {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let mut v: Vec<String> = replies.into_iter().map(Into::into).collect();
        v.reverse();
        Scripted { replies: Mutex::new(v) }
    }
}

impl Backend for Scripted {
    fn complete(&self, _request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let mut q = self.replies.lock().unwrap();
        let text = if q.len() > 1 {
            q.pop().unwrap()
        } else {
            q.last().cloned().unwrap_or_default()
        };
        Ok(Completion {
            text,
            latency: std::time::Duration::ZERO,
        })
    }
}

pub fn simulator(preset: SimulatorPreset) -> SimulatorBackend {
    SimulatorBackend::new(preset.spec(7))
}

pub fn small_catalog() -> Catalog {
    synthetic_catalog(
        &SyntheticSpec {
            items: 200,
            users: 300,
            ratings_per_user: 40,
            popularity_skew: 0.8,
        },
        5,
    )
    .unwrap()
}

pub fn samples(catalog: &Catalog, k: usize, count: usize, seed: u64) -> Vec<DrawnSample> {
    draw_samples(catalog, k, DistributionKind::Full, count, 10, seed).unwrap()
}
