//! Turning free-text ranker answers into candidate ids.
//!
//! Each non-empty line is stripped of list markers and matched against the
//! pool by exact title, then normalized title, then token-set similarity.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CandidateList, ItemId, RepairFlags};

pub const DEFAULT_SIMILARITY: f64 = 0.9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParsePolicy {
    /// Drop unknown lines and duplicates, append omitted items (full
    /// rankings) or truncate surplus picks (partial selections).
    #[default]
    Repair,
    /// Any deviation from the requested answer is a failure.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("answer deviates from the requested format: {0}")]
    Strict(String),
    #[error("line `{line}` matches several candidates equally well: {candidates:?}")]
    Ambiguous { line: String, candidates: Vec<ItemId> },
    #[error("expected {expected} selections, recognized {got}")]
    Shortfall { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Parsed {
    pub ids: Vec<ItemId>,
    pub repairs: RepairFlags,
}

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize_title(s: &str) -> String {
    let mapped: String = s
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

const ARTICLES: [&str; 3] = ["the", "a", "an"];

fn is_year(tok: &str) -> bool {
    tok.len() == 4 && tok.parse::<u32>().map(|y| (1800..=2100).contains(&y)).unwrap_or(false)
}

fn token_set(normalized: &str) -> BTreeSet<&str> {
    normalized
        .split(' ')
        .filter(|t| !t.is_empty() && !ARTICLES.contains(t))
        .collect()
}

fn dice(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// Dice coefficient of the two titles' token sets, ignoring articles. A
/// release year present on only one side is ignored.
pub fn token_set_similarity(a: &str, b: &str) -> f64 {
    let (na, nb) = (normalize_title(a), normalize_title(b));
    let (mut ta, mut tb) = (token_set(&na), token_set(&nb));
    let a_year = ta.iter().any(|t| is_year(t));
    let b_year = tb.iter().any(|t| is_year(t));
    if a_year && !b_year {
        ta.retain(|t| !is_year(t));
    } else if b_year && !a_year {
        tb.retain(|t| !is_year(t));
    }
    dice(&ta, &tb)
}

/// Removes list numbering, bullets and emphasis around a title. Returns the
/// first list number found, if any.
fn strip_marker(line: &str) -> (&str, Option<u32>) {
    let mut s = line.trim();
    let mut number = None;
    loop {
        let before = s;
        s = s.trim_start_matches(['-', '*', '•', '·', '+', '>', '#']).trim_start();
        let lower = s.to_ascii_lowercase();
        for prefix in ["rank ", "no. ", "no "] {
            if lower.starts_with(prefix) && s[prefix.len()..].starts_with(|c: char| c.is_ascii_digit()) {
                s = &s[prefix.len()..];
            }
        }
        let open = s.strip_prefix(['(', '[']).unwrap_or(s);
        let digits = open.len() - open.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits > 0 && digits <= 3 {
            let rest = &open[digits..];
            let value = open[..digits].parse().ok();
            if let Some(r) = rest.strip_prefix(['.', ')', ':', ']']) {
                s = r.trim_start();
                number = number.or(value);
            } else if let Some(r) = rest
                .strip_prefix(' ')
                .and_then(|r| r.trim_start().strip_prefix(['-', '–']))
            {
                s = r.trim_start();
                number = number.or(value);
            }
        }
        if s == before {
            break;
        }
    }
    let s = s
        .trim_matches(|c: char| c == '*' || c == '"' || c == '`' || c == '“' || c == '”' || c == '_')
        .trim();
    (s, number)
}

struct PoolIndex<'a> {
    ids: &'a [ItemId],
    titles: Vec<&'a str>,
    exact: HashMap<&'a str, Vec<usize>>,
    normalized: HashMap<String, Vec<usize>>,
}

impl<'a> PoolIndex<'a> {
    fn new(pool: &'a CandidateList, titles: &'a BTreeMap<ItemId, String>) -> Self {
        let ids = pool.ids();
        let titles: Vec<&str> = ids
            .iter()
            .map(|id| titles.get(id).map(String::as_str).unwrap_or(id.as_str()))
            .collect();
        let mut exact: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut normalized: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in titles.iter().enumerate() {
            exact.entry(*t).or_default().push(i);
            normalized.entry(normalize_title(t)).or_default().push(i);
        }
        PoolIndex {
            ids,
            titles,
            exact,
            normalized,
        }
    }

    /// Pool slot for a line, preferring unused slots among identical titles,
    /// and whether the match was verbatim.
    fn lookup(&self, line: &str, used: &[bool], threshold: f64) -> Result<Option<(usize, bool)>, ParseError> {
        let pick = |slots: &Vec<usize>| slots.iter().copied().find(|&i| !used[i]).unwrap_or(slots[0]);
        if let Some(slots) = self.exact.get(line) {
            return Ok(Some((pick(slots), true)));
        }
        let norm = normalize_title(line);
        if let Some(slots) = self.normalized.get(&norm) {
            return Ok(Some((pick(slots), false)));
        }
        let mut best = 0.0;
        let mut best_slots: Vec<usize> = Vec::new();
        for (i, t) in self.titles.iter().enumerate() {
            let sim = token_set_similarity(line, t);
            if sim > best {
                best = sim;
                best_slots.clear();
                best_slots.push(i);
            } else if sim == best && sim > 0.0 {
                best_slots.push(i);
            }
        }
        if best < threshold || best_slots.is_empty() {
            return Ok(None);
        }
        let distinct: BTreeSet<String> = best_slots.iter().map(|&i| normalize_title(self.titles[i])).collect();
        if distinct.len() > 1 {
            return Err(ParseError::Ambiguous {
                line: line.to_owned(),
                candidates: best_slots.iter().map(|&i| self.ids[i].clone()).collect(),
            });
        }
        Ok(Some((pick(&best_slots), false)))
    }
}

const COMMENT_SEPARATORS: [&str; 4] = [" - ", " – ", " — ", ": "];

/// Retries a line without a trailing comment such as `Heat (1995) - tense`,
/// cutting at the last separator first. Any hit is inexact.
fn lookup_head(
    index: &PoolIndex<'_>,
    text: &str,
    used: &[bool],
    threshold: f64,
) -> Result<Option<(usize, bool)>, ParseError> {
    let mut cuts: Vec<usize> = COMMENT_SEPARATORS
        .iter()
        .flat_map(|sep| text.match_indices(sep).map(|(i, _)| i))
        .filter(|&i| i > 0)
        .collect();
    cuts.sort_unstable_by(|a, b| b.cmp(a));
    cuts.dedup();
    for cut in cuts {
        let head = text[..cut].trim_end();
        if let Some((slot, _)) = index.lookup(head, used, threshold)? {
            return Ok(Some((slot, false)));
        }
    }
    Ok(None)
}

/// [`parse_and_match_with`] at the default similarity threshold.
pub fn parse_and_match(
    raw: &str,
    expected_count: usize,
    pool: &CandidateList,
    titles: &BTreeMap<ItemId, String>,
    policy: ParsePolicy,
) -> Result<Parsed, ParseError> {
    parse_and_match_with(raw, expected_count, pool, titles, policy, DEFAULT_SIMILARITY)
}

/// Extracts `expected_count` pool ids from a ranker's answer.
///
/// When `expected_count` covers the whole pool the result under
/// [`ParsePolicy::Repair`] is always a permutation of the pool (omitted items
/// appended in presented order). For partial selections surplus picks are
/// truncated and a shortfall is an error.
pub fn parse_and_match_with(
    raw: &str,
    expected_count: usize,
    pool: &CandidateList,
    titles: &BTreeMap<ItemId, String>,
    policy: ParsePolicy,
    threshold: f64,
) -> Result<Parsed, ParseError> {
    let index = PoolIndex::new(pool, titles);
    let mut used = vec![false; pool.len()];
    let mut picked: Vec<usize> = Vec::new();
    let mut repairs = RepairFlags::default();

    let mut numbers = Vec::new();
    for line in raw.lines() {
        let (text, number) = strip_marker(line);
        if text.is_empty() {
            continue;
        }
        numbers.extend(number);
        let found = match index.lookup(text, &used, threshold)? {
            Some(hit) => Some(hit),
            None => lookup_head(&index, text, &used, threshold)?,
        };
        match found {
            Some((slot, _)) if used[slot] => repairs.duplicates_dropped.push(pool.ids()[slot].clone()),
            Some((slot, exact)) => {
                used[slot] = true;
                picked.push(slot);
                if !exact {
                    repairs.inexact_matches.push(pool.ids()[slot].clone());
                }
            }
            None => repairs.hallucinated_dropped.push(text.to_owned()),
        }
    }
    // Unnumbered lines are ignored; numbered ones must count up from 1.
    repairs.renumbered = numbers.iter().enumerate().any(|(i, &n)| n != i as u32 + 1);

    let full = expected_count >= pool.len();
    let strict = policy == ParsePolicy::Strict;
    if strict && !repairs.is_clean() {
        return Err(ParseError::Strict(format!(
            "unrecognized lines {:?}, duplicates {:?}, inexact titles {:?}, numbering irregular: {}",
            repairs.hallucinated_dropped, repairs.duplicates_dropped, repairs.inexact_matches, repairs.renumbered
        )));
    }

    if full {
        if picked.len() < pool.len() {
            if strict {
                let missing: Vec<&ItemId> = (0..pool.len()).filter(|&i| !used[i]).map(|i| &pool.ids()[i]).collect();
                return Err(ParseError::Strict(format!("missing candidates {missing:?}")));
            }
            for (i, id) in pool.ids().iter().enumerate() {
                if !used[i] {
                    repairs.missing_appended.push(id.clone());
                    picked.push(i);
                }
            }
        }
    } else if picked.len() > expected_count {
        if strict {
            return Err(ParseError::Strict(format!(
                "asked for {expected_count} selections, got {}",
                picked.len()
            )));
        }
        repairs.truncated = picked.drain(expected_count..).map(|i| pool.ids()[i].clone()).collect();
    } else if picked.len() < expected_count {
        return Err(ParseError::Shortfall {
            expected: expected_count,
            got: picked.len(),
        });
    }

    Ok(Parsed {
        ids: picked.into_iter().map(|i| pool.ids()[i].clone()).collect(),
        repairs,
    })
}
