use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::backend::{BackendSpec, ParsePolicy, SimulatorPreset, DEFAULT_SIMILARITY};
use crate::data::{
    load_amazon_books, load_movielens, synthetic_catalog, Catalog, DistributionKind, SyntheticSpec, DEFAULT_HISTORY_LEN,
};
use crate::strategies::{Domain, StrategyConfig};

/// Where evaluation samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Directory holding `ratings.dat` and `movies.dat`.
    Movielens { dir: PathBuf },
    AmazonBooks {
        reviews: PathBuf,
        #[serde(default)]
        metadata: Option<PathBuf>,
    },
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
        #[serde(default)]
        seed: u64,
    },
    /// Pre-built samples exported by `sample`; cells take the first
    /// `sample_count` lines matching their distribution and K.
    Samples { path: PathBuf },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Movielens { .. } => "movielens",
            DatasetSpec::AmazonBooks { .. } => "amazon_books",
            DatasetSpec::Synthetic { .. } => "synthetic",
            DatasetSpec::Samples { .. } => "samples",
        }
    }

    /// Loads the ratings catalog. `Samples` has none.
    pub fn load(&self) -> Result<Option<Catalog>, RunError> {
        Ok(match self {
            DatasetSpec::Movielens { dir } => Some(load_movielens(dir)?),
            DatasetSpec::AmazonBooks { reviews, metadata } => Some(load_amazon_books(reviews, metadata.as_deref())?),
            DatasetSpec::Synthetic { spec, seed } => Some(synthetic_catalog(spec, *seed)?),
            DatasetSpec::Samples { .. } => None,
        })
    }
}

/// Which Sens aggregate the main report table shows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensHeadline {
    #[default]
    Signed,
    Absolute,
}

/// Parameters shared by every strategy in a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_repair_retries: u32,
    #[serde(default)]
    pub parse_policy: ParsePolicy,
    #[serde(default = "default_similarity")]
    pub similarity_threshold: f64,
    #[serde(default = "default_bootstrap_total")]
    pub bootstrap_total: usize,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default)]
    pub reshuffle_each_iteration: bool,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            temperature: 0.0,
            max_repair_retries: default_retries(),
            parse_policy: ParsePolicy::Repair,
            similarity_threshold: DEFAULT_SIMILARITY,
            bootstrap_total: default_bootstrap_total(),
            group_size: default_group_size(),
            reshuffle_each_iteration: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    /// `standard`, `bootstrap`, `rise@N`.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    /// Extra `rise@N` cells for the depth sweep.
    #[serde(default = "default_rise_sweep")]
    pub rise_n_sweep: Vec<usize>,
    #[serde(default = "default_distributions")]
    pub distributions: Vec<DistributionKind>,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_history_len")]
    pub history_len: usize,
    #[serde(default)]
    pub strategy_params: StrategyParams,
    #[serde(default = "default_backend")]
    pub backend: BackendSpec,
    #[serde(default = "default_seed")]
    pub experiment_seed: u64,
    /// A cell whose failed-trial share exceeds this aborts the run.
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    #[serde(default)]
    pub sens_headline: SensHeadline,
    #[serde(default)]
    pub domain: Domain,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_retries() -> u32 {
    2
}
fn default_similarity() -> f64 {
    DEFAULT_SIMILARITY
}
fn default_bootstrap_total() -> usize {
    9
}
fn default_group_size() -> usize {
    3
}
fn default_k_values() -> Vec<usize> {
    vec![10, 20, 30]
}
fn default_strategies() -> Vec<String> {
    vec!["standard".into(), "bootstrap".into(), "rise@1".into()]
}
fn default_rise_sweep() -> Vec<usize> {
    vec![1, 3, 5]
}
fn default_distributions() -> Vec<DistributionKind> {
    vec![DistributionKind::Full]
}
fn default_sample_count() -> usize {
    200
}
fn default_trials() -> usize {
    3
}
fn default_history_len() -> usize {
    DEFAULT_HISTORY_LEN
}
fn default_backend() -> BackendSpec {
    BackendSpec::simulator(SimulatorPreset::Biased { beta: 0.6, noise: 0.3 }.spec(42))
}
fn default_seed() -> u64 {
    42
}
fn default_failure_fraction() -> f64 {
    0.5
}

impl ExperimentConfig {
    /// All defaults over the given dataset.
    pub fn new(dataset: DatasetSpec) -> Self {
        ExperimentConfig {
            dataset,
            k_values: default_k_values(),
            strategies: default_strategies(),
            rise_n_sweep: default_rise_sweep(),
            distributions: default_distributions(),
            sample_count: default_sample_count(),
            trials: default_trials(),
            history_len: default_history_len(),
            strategy_params: StrategyParams::default(),
            backend: default_backend(),
            experiment_seed: default_seed(),
            max_failure_fraction: default_failure_fraction(),
            sens_headline: SensHeadline::Signed,
            domain: Domain::Movies,
            output_dir: None,
        }
    }

    /// Listed strategies followed by any sweep `rise@N` not already listed.
    pub fn strategy_configs(&self) -> Result<Vec<StrategyConfig>, RunError> {
        let mut out: Vec<StrategyConfig> = Vec::new();
        let sweep = self.rise_n_sweep.iter().map(|n| format!("rise@{n}"));
        for label in self.strategies.iter().cloned().chain(sweep) {
            let mut s: StrategyConfig = label.parse().map_err(|e| RunError::Config(format!("{e}")))?;
            let p = &self.strategy_params;
            s.temperature = p.temperature;
            s.max_repair_retries = p.max_repair_retries;
            s.parse_policy = p.parse_policy;
            s.similarity_threshold = p.similarity_threshold;
            s.bootstrap_total = p.bootstrap_total;
            s.group_size = p.group_size;
            s.reshuffle_each_iteration = p.reshuffle_each_iteration;
            s.domain = self.domain;
            if !out.iter().any(|o| o.label() == s.label()) {
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Labels of the explicitly listed strategies, deduplicated.
    pub fn main_strategy_labels(&self) -> Result<Vec<String>, RunError> {
        let mut out: Vec<String> = Vec::new();
        for label in &self.strategies {
            let s: StrategyConfig = label.parse().map_err(|e| RunError::Config(format!("{e}")))?;
            if !out.contains(&s.label()) {
                out.push(s.label());
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.sample_count == 0 {
            return bad("sample_count must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return bad("k_values must be nonempty and positive".into());
        }
        if self.distributions.is_empty() {
            return bad("at least one distribution is required".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return bad("max_failure_fraction must lie in [0, 1]".into());
        }
        if self.history_len == 0 {
            return bad("history_len must be at least 1".into());
        }
        let strategies = self.strategy_configs()?;
        if strategies.is_empty() {
            return bad("no strategies configured".into());
        }
        for &k in &self.k_values {
            for s in &strategies {
                s.validate(k)
                    .map_err(|e| RunError::Config(format!("{} at K = {k}: {e}", s.label())))?;
            }
        }
        self.backend.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Backend calls for a full run assuming every answer parses first time.
    pub fn projected_calls(&self) -> Result<usize, RunError> {
        let strategies = self.strategy_configs()?;
        let per_sample: usize = self
            .k_values
            .iter()
            .flat_map(|&k| strategies.iter().map(move |s| s.calls_per_ranking(k)))
            .sum();
        Ok(self.distributions.len() * self.sample_count * self.trials * 2 * per_sample)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::new(DatasetSpec::Synthetic {
            spec: SyntheticSpec::default(),
            seed: 1,
        })
    }

    #[test]
    fn defaults_from_minimal_json() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"dataset":{"kind":"synthetic"}}"#).unwrap();
        assert_eq!(c.k_values, vec![10, 20, 30]);
        assert_eq!(c.trials, 3);
        assert_eq!(c.sample_count, 200);
        let labels: Vec<String> = c.strategy_configs().unwrap().iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["standard", "bootstrap", "rise@1", "rise@3", "rise@5"]);
        c.validate().unwrap();
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = cfg();
        let mut b = cfg();
        b.output_dir = Some("/tmp/x".into());
        assert_eq!(a.hash(), b.hash());
        b.trials = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_rise_n_above_k() {
        let mut c = cfg();
        c.k_values = vec![3];
        assert!(c.validate().is_err());
        c.rise_n_sweep = vec![1, 3];
        c.validate().unwrap();
    }

    #[test]
    fn projected_call_count() {
        let mut c = cfg();
        c.k_values = vec![10];
        c.strategies = vec!["standard".into(), "bootstrap".into()];
        c.rise_n_sweep = vec![3];
        c.sample_count = 2;
        // (1 + 9 + 4) calls per ranking, two legs, 3 trials, 2 samples.
        assert_eq!(c.projected_calls().unwrap(), 14 * 2 * 3 * 2);
    }
}
