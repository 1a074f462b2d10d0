use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SensHeadline};
use super::records::TrialRecord;
use super::RunError;
use crate::data::DistributionKind;
use crate::metrics::{kendall_tau, ndcg_at_k, pairwise_taus, recall_at_k, summarize, MetricSummary};
use crate::types::ItemId;

pub const ACCURACY_CUTOFF: usize = 5;

/// Aggregates for one (distribution, K, strategy) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub distribution: DistributionKind,
    pub k: usize,
    pub strategy: String,
    pub samples: usize,
    pub trials: usize,
    pub failed_trials: usize,
    pub failed_outputs: usize,
    pub repaired_outputs: usize,
    pub backend_errors: usize,
    pub calls: usize,
    /// The first leg was not shuffled (intertwined lists).
    pub unshuffled: bool,
    pub pc: Option<MetricSummary>,
    pub sim: Option<MetricSummary>,
    pub sens: Option<MetricSummary>,
    pub sens_abs: Option<MetricSummary>,
    pub recall_at_5: Option<MetricSummary>,
    pub ndcg_at_5: Option<MetricSummary>,
}

impl CellReport {
    /// The Sens summary shown in the main table.
    pub fn sens_headline(&self, which: SensHeadline) -> Option<&MetricSummary> {
        match which {
            SensHeadline::Signed => self.sens.as_ref(),
            SensHeadline::Absolute => self.sens_abs.as_ref(),
        }
    }

    pub fn failure_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.failed_trials as f64 / self.trials as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub config_hash: String,
    pub sample_count: usize,
    pub trials_per_sample: usize,
    pub sens_headline: SensHeadline,
    pub distributions: Vec<DistributionKind>,
    pub k_values: Vec<usize>,
    /// Strategies of the main table, in config order.
    pub strategies: Vec<String>,
    /// Depths of the rise sweep table.
    pub rise_sweep: Vec<usize>,
    pub cells: Vec<CellReport>,
}

impl RunReport {
    pub fn cell(&self, distribution: DistributionKind, k: usize, strategy: &str) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.distribution == distribution && c.k == k && c.strategy == strategy)
    }
}

fn tau(a: &[ItemId], b: &[ItemId]) -> Result<f64, RunError> {
    kendall_tau(a, b)
        .map(|t| t.tau)
        .map_err(|e| RunError::Corrupt(format!("trial record holds a non-permutation: {e}")))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Tau per output pair (shuffled g, reversed g) with both present.
fn pc_taus(r: &TrialRecord) -> Result<Vec<f64>, RunError> {
    r.shuffled_outputs
        .iter()
        .zip(&r.reversed_outputs)
        .filter_map(|(a, b)| Some((a.as_ref()?, b.as_ref()?)))
        .map(|(a, b)| tau(a, b))
        .collect()
}

/// A trial fails when the backend errored or no output pair survived.
pub fn trial_failed(r: &TrialRecord) -> bool {
    r.backend_error.is_some()
        || !r
            .shuffled_outputs
            .iter()
            .zip(&r.reversed_outputs)
            .any(|(a, b)| a.is_some() && b.is_some())
}

/// One cell, from its records in (sample, trial) order.
pub fn aggregate_cell(
    distribution: DistributionKind,
    k: usize,
    strategy: &str,
    records: &[&TrialRecord],
) -> Result<CellReport, RunError> {
    let mut pc = Vec::new();
    let mut sens = Vec::new();
    let mut sens_abs = Vec::new();
    let mut recall = Vec::new();
    let mut ndcg = Vec::new();
    let mut sim = Vec::new();
    let mut by_sample: BTreeMap<usize, Vec<&Vec<ItemId>>> = BTreeMap::new();
    let mut cell = CellReport {
        distribution,
        k,
        strategy: strategy.to_owned(),
        samples: 0,
        trials: records.len(),
        failed_trials: 0,
        failed_outputs: 0,
        repaired_outputs: 0,
        backend_errors: 0,
        calls: 0,
        unshuffled: records.iter().any(|r| !r.shuffled_input),
        pc: None,
        sim: None,
        sens: None,
        sens_abs: None,
        recall_at_5: None,
        ndcg_at_5: None,
    };

    for r in records {
        cell.calls += r.calls;
        cell.repaired_outputs += r.repaired_outputs;
        let outputs = by_sample.entry(r.sample_index).or_default();
        if r.backend_error.is_some() {
            cell.backend_errors += 1;
            cell.failed_trials += 1;
            continue;
        }
        cell.failed_outputs += r.failed_outputs();
        match mean(&pc_taus(r)?) {
            Some(m) => pc.push(m),
            None => cell.failed_trials += 1,
        }

        let mut signed = Vec::new();
        for (input, outs) in [
            (&r.shuffled_order, &r.shuffled_outputs),
            (&r.reversed_order, &r.reversed_outputs),
        ] {
            for out in outs.iter().flatten() {
                signed.push(tau(input, out)?);
            }
        }
        if let Some(m) = mean(&signed) {
            sens.push(m);
            sens_abs.push(mean(&signed.iter().map(|t| t.abs()).collect::<Vec<_>>()).unwrap_or_default());
        }

        let mut rec = Vec::new();
        let mut nd = Vec::new();
        for out in r.shuffled_outputs.iter().flatten() {
            let bad = |e| RunError::Corrupt(format!("{}: {e}", r.key));
            rec.push(recall_at_k(out, &r.ground_truth, ACCURACY_CUTOFF).map_err(bad)?.value);
            nd.push(ndcg_at_k(out, &r.ground_truth, ACCURACY_CUTOFF).map_err(bad)?.value);
            outputs.push(out);
        }
        recall.extend(mean(&rec));
        ndcg.extend(mean(&nd));
    }

    cell.samples = by_sample.len();
    for outs in by_sample.values() {
        if outs.len() >= 2 {
            let taus = pairwise_taus(outs).map_err(|e| RunError::Corrupt(e.to_string()))?;
            sim.extend(mean(&taus));
        }
    }
    cell.pc = summarize("pc", &pc).ok();
    cell.sim = summarize("sim", &sim).ok();
    cell.sens = summarize("sens", &sens).ok();
    cell.sens_abs = summarize("sens_abs", &sens_abs).ok();
    cell.recall_at_5 = summarize("recall@5", &recall).ok();
    cell.ndcg_at_5 = summarize("ndcg@5", &ndcg).ok();
    Ok(cell)
}

/// Canonical cell order: distribution, K, strategy, as configured.
pub fn cell_order(config: &ExperimentConfig) -> Result<Vec<(DistributionKind, usize, String)>, RunError> {
    let strategies = config.strategy_configs()?;
    let mut out = Vec::new();
    for &d in &config.distributions {
        for &k in &config.k_values {
            for s in &strategies {
                out.push((d, k, s.label()));
            }
        }
    }
    Ok(out)
}

/// Builds the report from persisted records only. Cells without records are
/// omitted.
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<RunReport, RunError> {
    let mut by_cell: HashMap<(DistributionKind, usize, String), Vec<&TrialRecord>> = HashMap::new();
    let mut seen = HashSet::new();
    for r in records {
        // Resumed runs may hold a key twice; the first record wins.
        if seen.insert(r.key.as_str()) {
            by_cell
                .entry((r.distribution, r.k, r.strategy.clone()))
                .or_default()
                .push(r);
        }
    }
    let mut cells = Vec::new();
    for (d, k, s) in cell_order(config)? {
        if let Some(mut rs) = by_cell.remove(&(d, k, s.clone())) {
            rs.sort_by_key(|r| (r.sample_index, r.trial));
            cells.push(aggregate_cell(d, k, &s, &rs)?);
        }
    }
    let mut rise_sweep = config.rise_n_sweep.clone();
    rise_sweep.sort_unstable();
    rise_sweep.dedup();
    Ok(RunReport {
        dataset: config.dataset.name().to_owned(),
        config_hash: config.hash(),
        sample_count: config.sample_count,
        trials_per_sample: config.trials,
        sens_headline: config.sens_headline,
        distributions: config.distributions.clone(),
        k_values: config.k_values.clone(),
        strategies: config.main_strategy_labels()?,
        rise_sweep,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ids;

    fn record(
        sample: usize,
        trial: usize,
        shuffled: &[&str],
        out_s: Option<&[&str]>,
        out_r: Option<&[&str]>,
    ) -> TrialRecord {
        let shuffled_order = ids(shuffled);
        let mut reversed_order = shuffled_order.clone();
        reversed_order.reverse();
        TrialRecord {
            key: TrialRecord::make_key(DistributionKind::Full, shuffled.len(), "standard", sample, trial),
            distribution: DistributionKind::Full,
            k: shuffled.len(),
            strategy: "standard".into(),
            sample_index: sample,
            user_id: format!("u{sample}"),
            trial,
            shuffled_input: true,
            shuffled_order,
            reversed_order,
            shuffled_outputs: vec![out_s.map(ids)],
            reversed_outputs: vec![out_r.map(ids)],
            ground_truth: ids(&["a", "b", "c"]),
            repaired_outputs: 0,
            errors: vec![],
            backend_error: None,
            calls: 2,
        }
    }

    #[test]
    fn echo_like_records() {
        let order = ["a", "b", "c", "d", "e", "f"];
        let rev = ["f", "e", "d", "c", "b", "a"];
        let rs = [
            record(0, 0, &order, Some(&order), Some(&rev)),
            record(0, 1, &order, Some(&order), Some(&rev)),
        ];
        let refs: Vec<&TrialRecord> = rs.iter().collect();
        let c = aggregate_cell(DistributionKind::Full, 6, "standard", &refs).unwrap();
        assert_eq!(c.pc.as_ref().unwrap().mean, -1.0);
        assert_eq!(c.sens.as_ref().unwrap().mean, 1.0);
        assert_eq!(c.sim.as_ref().unwrap().mean, 1.0);
        assert_eq!(c.recall_at_5.as_ref().unwrap().mean, 1.0);
        assert_eq!((c.samples, c.trials, c.failed_trials, c.calls), (1, 2, 0, 4));
    }

    #[test]
    fn failed_leg_fails_the_trial() {
        let order = ["a", "b", "c", "d"];
        let rs = [record(0, 0, &order, Some(&order), None)];
        let refs: Vec<&TrialRecord> = rs.iter().collect();
        let c = aggregate_cell(DistributionKind::Full, 4, "standard", &refs).unwrap();
        assert!(trial_failed(&rs[0]));
        assert_eq!((c.failed_trials, c.failed_outputs), (1, 1));
        assert!(c.pc.is_none());
        assert_eq!(c.sens.as_ref().unwrap().count, 1);
    }
}
