//! Positional consistency: rank a shuffled candidate list and its reversal,
//! then correlate the two outputs. Repeated for T seeded trials per sample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{kendall_tau, summarize, MetricSummary};
use crate::order::{reverse, shuffle, trial_seed};
use crate::types::{CandidateList, EvalSample, Ranking};

/// Which side of a trial's input pair is being ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcLeg {
    Shuffled,
    Reversed,
}

impl PcLeg {
    pub fn as_str(self) -> &'static str {
        match self {
            PcLeg::Shuffled => "shuffled",
            PcLeg::Reversed => "reversed",
        }
    }
}

/// How a single ranking attempt failed.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LegFailure {
    /// Transport or service failure after the client exhausted its retries.
    #[error("backend failure: {0}")]
    Backend(String),
    /// The ranker answered but the answer could not be turned into a ranking.
    #[error("unrepairable output: {0}")]
    Unrepairable(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcError {
    #[error("positional consistency needs at least one trial")]
    NoTrials,
    #[error("trial {trial}: {source}")]
    Backend { trial: usize, source: LegFailure },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcOutcome {
    /// `None` when every trial failed.
    pub summary: Option<MetricSummary>,
    /// Per-trial tau, `None` for failed trials.
    pub taus: Vec<Option<f64>>,
    pub failed_trials: usize,
}

/// The shuffled input and its reversal for trial `trial` of a sample.
///
/// With `shuffle_input == false` (intertwined lists) the shuffled leg is the
/// candidate list as given.
pub fn trial_orders(
    candidates: &CandidateList,
    experiment_seed: u64,
    sample_key: &str,
    trial: usize,
    shuffle_input: bool,
) -> (CandidateList, CandidateList) {
    let first = if shuffle_input {
        shuffle(candidates, trial_seed(experiment_seed, sample_key, trial as u64))
    } else {
        candidates.clone()
    };
    let second = reverse(&first);
    (first, second)
}

/// Runs `trials` shuffled/reversed trials through `rank` and summarizes the
/// per-trial Kendall's tau. Trials whose output is unrepairable are excluded
/// from the mean and counted; backend failures abort with the trial index.
pub fn positional_consistency<F>(
    sample: &EvalSample,
    trials: usize,
    seed: u64,
    mut rank: F,
) -> Result<PcOutcome, PcError>
where
    F: FnMut(&CandidateList, PcLeg, usize) -> Result<Ranking, LegFailure>,
{
    if trials == 0 {
        return Err(PcError::NoTrials);
    }
    let mut taus = Vec::with_capacity(trials);
    let mut failed = 0;
    for t in 0..trials {
        let (shuffled, reversed) = trial_orders(sample.candidates(), seed, sample.user_id(), t, true);
        let legs =
            rank(&shuffled, PcLeg::Shuffled, t).and_then(|r1| rank(&reversed, PcLeg::Reversed, t).map(|r2| (r1, r2)));
        match legs {
            Ok((r1, r2)) => {
                let tau = kendall_tau(r1.ids(), r2.ids()).map_err(|e| LegFailure::Unrepairable(e.to_string()));
                match tau {
                    Ok(t) => taus.push(Some(t.tau)),
                    Err(_) => {
                        failed += 1;
                        taus.push(None);
                    }
                }
            }
            Err(LegFailure::Unrepairable(_)) => {
                failed += 1;
                taus.push(None);
            }
            Err(source @ LegFailure::Backend(_)) => return Err(PcError::Backend { trial: t, source }),
        }
    }
    let ok: Vec<f64> = taus.iter().flatten().copied().collect();
    Ok(PcOutcome {
        summary: summarize("pc", &ok).ok(),
        taus,
        failed_trials: failed,
    })
}
