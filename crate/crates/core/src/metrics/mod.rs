//! Rank-correlation and top-k accuracy metrics plus mean/std aggregation.
//!
//! All rankings compared here are strict permutations, so Kendall's tau is the
//! plain tau-a `(n_c - n_d) / (n (n - 1) / 2)`; there is no tie correction.
//! Standard deviations are population deviations (divide by count).

mod consistency;

pub use consistency::{positional_consistency, trial_orders, LegFailure, PcError, PcLeg, PcOutcome};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ItemId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("rankings are over different item sets")]
    MismatchedSets,
    #[error("kendall tau needs at least 2 items, got {0}")]
    TooShort(usize),
    #[error("cannot summarize an empty sequence")]
    Empty,
    #[error("output similarity needs at least 2 rankings, got {0}")]
    TooFewRankings(usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("ground-truth item `{0}` is not in the ranking")]
    GroundTruthOutside(ItemId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    pub tau: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub pairs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MetricSummary {
    /// `"0.67 ± 0.19"`, two decimals.
    pub fn display(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Kendall's tau between two orderings of the same id set.
///
/// Runs in O(n log n): the second ranking is rewritten as positions in the
/// first and discordant pairs are counted as inversions by merge sort.
pub fn kendall_tau(r1: &[ItemId], r2: &[ItemId]) -> Result<TauResult, MetricError> {
    let n = r1.len();
    if n != r2.len() {
        return Err(MetricError::MismatchedSets);
    }
    let pos: HashMap<&ItemId, usize> = r1.iter().enumerate().map(|(i, id)| (id, i)).collect();
    if pos.len() != n {
        return Err(MetricError::MismatchedSets);
    }
    let mut seq = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for id in r2 {
        let p = *pos.get(id).ok_or(MetricError::MismatchedSets)?;
        if std::mem::replace(&mut seen[p], true) {
            return Err(MetricError::MismatchedSets);
        }
        seq.push(p);
    }
    if n < 2 {
        return Err(MetricError::TooShort(n));
    }
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let discordant = count_inversions(&mut seq);
    let concordant = pairs - discordant;
    Ok(TauResult {
        tau: (concordant as f64 - discordant as f64) / pairs as f64,
        concordant,
        discordant,
        pairs,
    })
}

fn count_inversions(seq: &mut [usize]) -> u64 {
    let mut buf = seq.to_vec();
    sort_count(seq, &mut buf)
}

fn sort_count(a: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = sort_count(&mut a[..mid], &mut buf[..mid]) + sort_count(&mut a[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if a[i] <= a[j] {
            buf[k] = a[i];
            i += 1;
        } else {
            buf[k] = a[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&a[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&a[j..n]);
    a.copy_from_slice(&buf[..n]);
    inv
}

/// Arithmetic mean and population standard deviation.
pub fn summarize(name: &str, values: &[f64]) -> Result<MetricSummary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    Ok(MetricSummary {
        name: name.to_owned(),
        mean,
        std: var.sqrt(),
        count,
    })
}

/// Kendall's tau for every unordered pair of rankings, in `(i, j)` order with `i < j`.
pub fn pairwise_taus<R: AsRef<[ItemId]>>(rankings: &[R]) -> Result<Vec<f64>, MetricError> {
    if rankings.len() < 2 {
        return Err(MetricError::TooFewRankings(rankings.len()));
    }
    let mut out = Vec::with_capacity(rankings.len() * (rankings.len() - 1) / 2);
    for i in 0..rankings.len() {
        for j in i + 1..rankings.len() {
            out.push(kendall_tau(rankings[i].as_ref(), rankings[j].as_ref())?.tau);
        }
    }
    Ok(out)
}

/// Mean and std of Kendall's tau over all pairs of the given rankings.
pub fn output_similarity<R: AsRef<[ItemId]>>(rankings: &[R]) -> Result<MetricSummary, MetricError> {
    summarize("sim", &pairwise_taus(rankings)?)
}

/// Kendall's tau between the presented order and the returned ranking.
pub fn input_sensitivity(input: &[ItemId], output: &[ItemId]) -> Result<f64, MetricError> {
    Ok(kendall_tau(input, output)?.tau)
}

/// A top-k metric value; `clamped` is set when k exceeded the ranking length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopK {
    pub value: f64,
    pub clamped: bool,
}

fn top_k_hits<'a>(
    ranking: &'a [ItemId],
    ground_truth: &[ItemId],
    k: usize,
) -> Result<(BTreeSet<&'a ItemId>, usize, bool), MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if let Some(g) = ground_truth.iter().find(|g| !ranking.contains(g)) {
        return Err(MetricError::GroundTruthOutside(g.clone()));
    }
    let clamped = k > ranking.len();
    let k = k.min(ranking.len());
    let truth: BTreeSet<&ItemId> = ground_truth.iter().collect();
    let hits = ranking[..k].iter().filter(|id| truth.contains(id)).collect();
    Ok((hits, k, clamped))
}

/// Fraction of ground-truth items found in the top `k`.
pub fn recall_at_k(ranking: &[ItemId], ground_truth: &[ItemId], k: usize) -> Result<TopK, MetricError> {
    let (hits, _, clamped) = top_k_hits(ranking, ground_truth, k)?;
    let truth = ground_truth.iter().collect::<BTreeSet<_>>().len();
    let value = if truth == 0 {
        0.0
    } else {
        hits.len() as f64 / truth as f64
    };
    Ok(TopK { value, clamped })
}

/// Binary-gain NDCG: `DCG@k / IDCG` with `DCG = sum 1 / log2(i + 1)` over
/// relevant 1-based positions `i <= k`. The ideal places every ground-truth
/// item at the top, so the value is non-decreasing in `k`.
pub fn ndcg_at_k(ranking: &[ItemId], ground_truth: &[ItemId], k: usize) -> Result<TopK, MetricError> {
    let (_, k_eff, clamped) = top_k_hits(ranking, ground_truth, k)?;
    let truth: BTreeSet<&ItemId> = ground_truth.iter().collect();
    let dcg: f64 = ranking[..k_eff]
        .iter()
        .enumerate()
        .filter(|(_, id)| truth.contains(id))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..truth.len()).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    let value = if ideal == 0.0 { 0.0 } else { dcg / ideal };
    Ok(TopK { value, clamped })
}
