//! Candidate and user sampling.
//!
//! Items with at least one interaction are sorted by popularity (descending,
//! ties by id) and split into K contiguous bins; one item is drawn from each
//! bin. Restricted distributions bin only their popularity slice.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Catalog, DataError};
use crate::order::{rng, uniform_below, SeedHasher};
use crate::types::{CandidateList, EvalSample, HistoryEntry, InteractionHistory, ItemId};

pub const DEFAULT_HISTORY_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    /// The whole popularity range.
    Full,
    /// Most popular 20%.
    Top,
    /// Popularity ranks in (20%, 49%].
    Middle,
    /// Least popular 50%.
    Bottom,
    /// Full-range draw, reordered to alternate popular and unpopular items.
    Intertwined,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 5] = [
        DistributionKind::Full,
        DistributionKind::Top,
        DistributionKind::Middle,
        DistributionKind::Bottom,
        DistributionKind::Intertwined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DistributionKind::Full => "full",
            DistributionKind::Top => "top",
            DistributionKind::Middle => "middle",
            DistributionKind::Bottom => "bottom",
            DistributionKind::Intertwined => "intertwined",
        }
    }

    /// Intertwined lists keep their alternating order in every prompt.
    pub fn shuffles_input(self) -> bool {
        self != DistributionKind::Intertwined
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistributionKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DistributionKind::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown distribution `{s}`"))
    }
}

/// Items with at least one interaction, most popular first, ties by id.
pub fn popularity_order(catalog: &Catalog) -> Vec<ItemId> {
    let mut items: Vec<_> = catalog.items().values().filter(|i| i.popularity > 0).collect();
    items.sort_by(|a, b| b.popularity.cmp(&a.popularity).then_with(|| a.id.cmp(&b.id)));
    items.into_iter().map(|i| i.id.clone()).collect()
}

/// Splits `items` into `k` contiguous bins whose sizes differ by at most one;
/// the first `len % k` bins take the extra item.
pub fn split_bins(items: &[ItemId], k: usize) -> Result<Vec<Vec<ItemId>>, DataError> {
    if k == 0 {
        return Err(DataError::ZeroK);
    }
    if items.len() < k {
        return Err(DataError::TooFewItems {
            needed: k,
            available: items.len(),
        });
    }
    let (base, extra) = (items.len() / k, items.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let size = base + usize::from(b < extra);
        out.push(items[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

pub fn popularity_bins(catalog: &Catalog, k: usize) -> Result<Vec<Vec<ItemId>>, DataError> {
    split_bins(&popularity_order(catalog), k)
}

/// The popularity slice a distribution draws from, by floor arithmetic on
/// the sorted list of length n: Top = `[0, n*20/100)`, Middle =
/// `[n*20/100, n*49/100)`, Bottom = `[n - n/2, n)`.
pub fn distribution_slice(sorted: &[ItemId], distribution: DistributionKind) -> &[ItemId] {
    let n = sorted.len();
    match distribution {
        DistributionKind::Full | DistributionKind::Intertwined => sorted,
        DistributionKind::Top => &sorted[..n * 20 / 100],
        DistributionKind::Middle => &sorted[n * 20 / 100..n * 49 / 100],
        DistributionKind::Bottom => &sorted[n - n / 2..],
    }
}

/// `[0, n-1, 1, n-2, 2, n-3, ...]`.
pub fn intertwined_pattern(n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        out.push(lo);
        lo += 1;
        if lo < hi {
            hi -= 1;
            out.push(hi);
        }
    }
    out
}

/// K candidates, one drawn uniformly from each popularity bin of the
/// distribution's slice, in bin (popularity) order; intertwined lists are
/// reordered by [`intertwined_pattern`].
pub fn sample_candidates(
    catalog: &Catalog,
    k: usize,
    distribution: DistributionKind,
    seed: u64,
) -> Result<CandidateList, DataError> {
    let sorted = popularity_order(catalog);
    let slice = distribution_slice(&sorted, distribution);
    if slice.len() < k {
        return Err(DataError::SliceTooSmall {
            distribution,
            size: slice.len(),
            k,
        });
    }
    let bins = split_bins(slice, k)?;
    let mut r = rng(seed);
    let drawn: Vec<ItemId> = bins
        .iter()
        .map(|bin| bin[uniform_below(&mut r, bin.len() as u64) as usize].clone())
        .collect();
    let ordered = if distribution == DistributionKind::Intertwined {
        intertwined_pattern(k).into_iter().map(|i| drawn[i].clone()).collect()
    } else {
        drawn
    };
    Ok(CandidateList::from_unchecked(ordered))
}

/// Rating desc, then more recent, then id.
fn preference_order(a: &(ItemId, u8, i64), b: &(ItemId, u8, i64)) -> std::cmp::Ordering {
    b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then_with(|| a.0.cmp(&b.0))
}

/// Picks a user uniformly among those who rated at least three candidates
/// and at least one other item; ground truth is their top three rated
/// candidates and history their `history_len` best-rated other items.
pub fn build_eval_sample(
    catalog: &Catalog,
    candidates: &CandidateList,
    history_len: usize,
    seed: u64,
) -> Option<EvalSample> {
    let cand: BTreeSet<&ItemId> = candidates.ids().iter().collect();
    let mut rated: BTreeMap<&str, usize> = BTreeMap::new();
    for id in candidates.ids() {
        for it in catalog.raters(id) {
            *rated.entry(it.user_id.as_str()).or_default() += 1;
        }
    }
    let qualifying: Vec<&str> = rated
        .into_iter()
        .filter(|(user, n)| *n >= 3 && catalog.user_interactions(user).count() > *n)
        .map(|(user, _)| user)
        .collect();
    if qualifying.is_empty() {
        return None;
    }
    let user = qualifying[uniform_below(&mut rng(seed), qualifying.len() as u64) as usize];

    let (mut inside, mut outside): (Vec<_>, Vec<_>) = catalog
        .user_interactions(user)
        .map(|it| (it.item_id.clone(), it.rating, it.timestamp))
        .partition(|(id, _, _)| cand.contains(id));
    inside.sort_by(preference_order);
    outside.sort_by(preference_order);
    let ground_truth: Vec<ItemId> = inside.into_iter().take(3).map(|(id, _, _)| id).collect();
    let history: Vec<HistoryEntry> = outside
        .into_iter()
        .take(history_len.max(1))
        .map(|(id, rating, timestamp)| HistoryEntry { id, rating, timestamp })
        .collect();

    let titles: BTreeMap<ItemId, String> = candidates
        .ids()
        .iter()
        .chain(history.iter().map(|h| &h.id))
        .map(|id| (id.clone(), catalog.title(id).to_owned()))
        .collect();
    EvalSample::new(
        user,
        InteractionHistory::new(history).ok()?,
        candidates.clone(),
        ground_truth,
        titles,
    )
    .ok()
}

/// An evaluation sample with the distribution and seed that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawnSample {
    pub sample: EvalSample,
    pub distribution: DistributionKind,
    pub seed: u64,
}

const MAX_ATTEMPTS_PER_SAMPLE: usize = 1000;

/// `count` samples for one (K, distribution) cell. Candidate lists with no
/// qualifying user are redrawn with the next derived seed.
pub fn draw_samples(
    catalog: &Catalog,
    k: usize,
    distribution: DistributionKind,
    count: usize,
    history_len: usize,
    seed: u64,
) -> Result<Vec<DrawnSample>, DataError> {
    let mut out = Vec::with_capacity(count);
    for index in 0..count {
        let mut found = None;
        for attempt in 0..MAX_ATTEMPTS_PER_SAMPLE {
            let s = SeedHasher::new(seed)
                .str("sample")
                .str(distribution.as_str())
                .u64(k as u64)
                .u64(index as u64)
                .u64(attempt as u64)
                .finish();
            let candidates = sample_candidates(catalog, k, distribution, s)?;
            if let Some(sample) = build_eval_sample(
                catalog,
                &candidates,
                history_len,
                SeedHasher::new(s).str("user").finish(),
            ) {
                found = Some(DrawnSample {
                    sample,
                    distribution,
                    seed: s,
                });
                break;
            }
        }
        out.push(found.ok_or(DataError::NoQualifyingUser {
            attempts: MAX_ATTEMPTS_PER_SAMPLE,
        })?);
    }
    Ok(out)
}
