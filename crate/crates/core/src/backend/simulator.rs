//! Simulated rankers with a tunable position bias.
//!
//! Each presented item gets a utility mixing its normalized relevance with a
//! linear-decay positional prior:
//!
//! ```text
//! u(p) = (1 - b) * rel_norm + b * (1 - p / (len - 1))
//! b    = beta * min(1, len / 20)   with length scaling, else beta
//! ```
//!
//! At temperature 0 items are sorted by descending utility (earlier
//! presentation wins ties); otherwise a Plackett-Luce ranking is drawn by
//! sequential softmax sampling without replacement.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, CompletionRequest};
use crate::order::{rng, uniform_f64, SeedHasher};
use crate::types::{EvalSample, ItemId};

/// List length at which length-scaled bias reaches full strength.
pub const LENGTH_REFERENCE: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceSource {
    /// Ground-truth items score highest (in ground-truth order); the rest get
    /// seeded pseudo-random scores below them.
    #[default]
    FromGroundTruth,
    /// Every candidate gets a seeded pseudo-random score.
    SeededHash,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatorParams {
    pub beta: f64,
    #[serde(default = "yes")]
    pub length_scaling: bool,
    #[serde(default)]
    pub noise_temperature: f64,
    #[serde(default)]
    pub relevance_source: RelevanceSource,
}

fn yes() -> bool {
    true
}

impl SimulatorParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(BackendError::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !self.noise_temperature.is_finite() || self.noise_temperature < 0.0 {
            return Err(BackendError::Config(format!(
                "noise temperature {} must be finite and >= 0",
                self.noise_temperature
            )));
        }
        Ok(())
    }

    /// Bias strength applied to a list of `len` items.
    pub fn effective_beta(&self, len: usize) -> f64 {
        if self.length_scaling {
            self.beta * (len as f64 / LENGTH_REFERENCE as f64).min(1.0)
        } else {
            self.beta
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatorSpec {
    pub params: SimulatorParams,
    #[serde(default)]
    pub seed: u64,
    /// Reverse the simulated order before answering (the REVERSE preset).
    #[serde(default)]
    pub reverse_output: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimulatorPreset {
    /// Pure relevance sort; ignores presentation order.
    Oracle,
    /// Returns the presented order verbatim.
    Echo,
    /// Returns the presented order reversed.
    Reverse,
    Biased {
        beta: f64,
        noise: f64,
    },
}

impl SimulatorPreset {
    pub fn spec(self, seed: u64) -> SimulatorSpec {
        let fixed = |beta| SimulatorParams {
            beta,
            length_scaling: false,
            noise_temperature: 0.0,
            relevance_source: RelevanceSource::FromGroundTruth,
        };
        let (params, reverse_output) = match self {
            SimulatorPreset::Oracle => (fixed(0.0), false),
            SimulatorPreset::Echo => (fixed(1.0), false),
            SimulatorPreset::Reverse => (fixed(1.0), true),
            SimulatorPreset::Biased { beta, noise } => (
                SimulatorParams {
                    beta,
                    length_scaling: true,
                    noise_temperature: noise,
                    relevance_source: RelevanceSource::FromGroundTruth,
                },
                false,
            ),
        };
        SimulatorSpec {
            params,
            seed,
            reverse_output,
        }
    }

    pub fn parse(name: &str, beta: f64, noise: f64) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "oracle" => Some(SimulatorPreset::Oracle),
            "echo" => Some(SimulatorPreset::Echo),
            "reverse" => Some(SimulatorPreset::Reverse),
            "biased" => Some(SimulatorPreset::Biased { beta, noise }),
            _ => None,
        }
    }
}

fn unit_hash(seed: u64, user: &str, id: &ItemId) -> f64 {
    let h = SeedHasher::new(seed)
        .str("relevance")
        .str(user)
        .str(id.as_str())
        .finish();
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// True relevance of every candidate of `sample` as seen by the simulator.
pub fn relevance_map(sample: &EvalSample, source: RelevanceSource, seed: u64) -> HashMap<ItemId, f64> {
    let user = sample.user_id();
    let mut rel: HashMap<ItemId, f64> = sample
        .candidates()
        .ids()
        .iter()
        .map(|id| {
            let r = match source {
                RelevanceSource::FromGroundTruth => 0.85 * unit_hash(seed, user, id),
                RelevanceSource::SeededHash => unit_hash(seed, user, id),
            };
            (id.clone(), r)
        })
        .collect();
    if source == RelevanceSource::FromGroundTruth {
        for (i, g) in sample.ground_truth().iter().enumerate() {
            rel.insert(g.clone(), 1.0 - 0.05 * i as f64);
        }
    }
    rel
}

/// Simulated ranking of `presented` (see module docs for the model).
///
/// # Panics
/// If an id of `presented` has no entry in `relevance`.
pub fn simulate_rank(
    params: &SimulatorParams,
    presented: &[ItemId],
    relevance: &HashMap<ItemId, f64>,
    seed: u64,
) -> Vec<ItemId> {
    let len = presented.len();
    if len <= 1 {
        return presented.to_vec();
    }
    let rel: Vec<f64> = presented
        .iter()
        .map(|id| *relevance.get(id).unwrap_or_else(|| panic!("no relevance for `{id}`")))
        .collect();
    let lo = rel.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let beta = params.effective_beta(len);
    let utility: Vec<f64> = rel
        .iter()
        .enumerate()
        .map(|(p, r)| {
            let norm = if span > 0.0 { (r - lo) / span } else { 0.0 };
            let prior = 1.0 - p as f64 / (len - 1) as f64;
            (1.0 - beta) * norm + beta * prior
        })
        .collect();

    let mut order: Vec<usize> = (0..len).collect();
    if params.noise_temperature == 0.0 {
        // Stable sort keeps the earlier presented position first on ties.
        order.sort_by(|&a, &b| utility[b].partial_cmp(&utility[a]).expect("finite utility"));
        return order.into_iter().map(|i| presented[i].clone()).collect();
    }

    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(len);
    while !order.is_empty() {
        let max = order.iter().map(|&i| utility[i]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = order
            .iter()
            .map(|&i| ((utility[i] - max) / params.noise_temperature).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        let mut target = uniform_f64(&mut rng) * total;
        let mut pick = order.len() - 1;
        for (slot, w) in weights.iter().enumerate() {
            if target < *w {
                pick = slot;
                break;
            }
            target -= w;
        }
        out.push(presented[order.remove(pick)].clone());
    }
    out
}

/// `"1. A\n2. B\n..."`.
pub fn render_numbered<'a>(titles: impl IntoIterator<Item = &'a str>) -> String {
    titles
        .into_iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Answers prompts by simulating a biased ranker over the presented list.
#[derive(Clone, Debug)]
pub struct SimulatorBackend {
    spec: SimulatorSpec,
}

impl SimulatorBackend {
    pub fn new(spec: SimulatorSpec) -> Self {
        SimulatorBackend { spec }
    }

    pub fn preset(preset: SimulatorPreset, seed: u64) -> Self {
        SimulatorBackend::new(preset.spec(seed))
    }

    pub fn spec(&self) -> &SimulatorSpec {
        &self.spec
    }

    fn call_seed(&self, request: &CompletionRequest<'_>) -> u64 {
        let ctx = request.context;
        SeedHasher::new(self.spec.seed)
            .str("call")
            .str(&ctx.sample_key)
            .u64(ctx.trial as u64)
            .str(ctx.leg.map(|l| l.as_str()).unwrap_or("-"))
            .str(&ctx.strategy)
            .u64(ctx.iteration as u64)
            .u64(ctx.attempt as u64)
            .finish()
    }
}

impl Backend for SimulatorBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let start = Instant::now();
        let relevance = relevance_map(request.sample, self.spec.params.relevance_source, self.spec.seed);
        let mut ranked = simulate_rank(
            &self.spec.params,
            request.presented.ids(),
            &relevance,
            self.call_seed(request),
        );
        if self.spec.reverse_output {
            ranked.reverse();
        }
        ranked.truncate(request.expected_count);
        let text = render_numbered(ranked.iter().map(|id| request.sample.title(id)));
        Ok(Completion {
            text,
            latency: start.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ids;

    fn rel(pairs: &[(&str, f64)]) -> HashMap<ItemId, f64> {
        pairs.iter().map(|(k, v)| (ItemId::new(*k), *v)).collect()
    }

    fn params(beta: f64, temp: f64, scaling: bool) -> SimulatorParams {
        SimulatorParams {
            beta,
            length_scaling: scaling,
            noise_temperature: temp,
            relevance_source: RelevanceSource::FromGroundTruth,
        }
    }

    fn permutations(items: &[ItemId]) -> Vec<Vec<ItemId>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head.clone());
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn beta_zero_is_relevance_sort_for_every_presentation() {
        for k in 1..=5 {
            let items: Vec<ItemId> = (0..k).map(|i| ItemId::new(format!("i{i}"))).collect();
            let relevance: HashMap<ItemId, f64> = items
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), (i * 7 % 5) as f64 + i as f64 * 0.1))
                .collect();
            let mut expected = items.clone();
            expected.sort_by(|a, b| relevance[b].partial_cmp(&relevance[a]).unwrap());
            for perm in permutations(&items) {
                assert_eq!(simulate_rank(&params(0.0, 0.0, true), &perm, &relevance, 1), expected);
            }
        }
    }

    #[test]
    fn beta_one_echoes_presentation() {
        let items = ids(&["a", "b", "c", "d"]);
        let relevance = rel(&[("a", 0.1), ("b", 0.9), ("c", 0.5), ("d", 0.3)]);
        for perm in permutations(&items) {
            assert_eq!(simulate_rank(&params(1.0, 0.0, false), &perm, &relevance, 9), perm);
        }
    }

    #[test]
    fn tie_goes_to_earlier_position() {
        // u(b) = 0.5 * 0 + 0.5 * 1 = 0.5, u(a) = 0.5 * 1 + 0.5 * 0 = 0.5.
        let relevance = rel(&[("a", 1.0), ("b", 0.0)]);
        let out = simulate_rank(&params(0.5, 0.0, false), &ids(&["b", "a"]), &relevance, 0);
        assert_eq!(out, ids(&["b", "a"]));
    }

    #[test]
    fn singleton_returned_as_is() {
        let relevance = rel(&[("a", 1.0)]);
        assert_eq!(
            simulate_rank(&params(0.3, 1.0, true), &ids(&["a"]), &relevance, 0),
            ids(&["a"])
        );
    }

    #[test]
    fn plackett_luce_is_seeded_permutation() {
        let items: Vec<ItemId> = (0..12).map(|i| ItemId::new(format!("i{i}"))).collect();
        let relevance: HashMap<ItemId, f64> = items.iter().enumerate().map(|(i, id)| (id.clone(), i as f64)).collect();
        let p = params(0.4, 0.3, true);
        let a = simulate_rank(&p, &items, &relevance, 5);
        assert_eq!(a, simulate_rank(&p, &items, &relevance, 5));
        let mut sorted = a.clone();
        sorted.sort();
        let mut expected = items.clone();
        expected.sort();
        assert_eq!(sorted, expected);
        let differs = (0..20).any(|s| simulate_rank(&p, &items, &relevance, s) != a);
        assert!(differs);
    }

    #[test]
    fn plackett_luce_first_pick_frequencies() {
        // Two items, utilities u_a = 1, u_b = 0 (beta 0): P(a first) = 1 / (1 + e^{-1/T}).
        let relevance = rel(&[("a", 1.0), ("b", 0.0)]);
        let p = params(0.0, 0.5, false);
        let n = 20_000;
        let hits = (0..n)
            .filter(|s| simulate_rank(&p, &ids(&["b", "a"]), &relevance, *s as u64)[0] == ItemId::new("a"))
            .count();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((hits as f64 / n as f64 - expected).abs() < 0.01);
    }

    #[test]
    fn effective_beta_scales_with_length() {
        let p = params(0.6, 0.0, true);
        assert!((p.effective_beta(10) - 0.3).abs() < 1e-12);
        assert!((p.effective_beta(20) - 0.6).abs() < 1e-12);
        assert!((p.effective_beta(30) - 0.6).abs() < 1e-12);
        assert_eq!(params(0.6, 0.0, false).effective_beta(5), 0.6);
    }

    #[test]
    fn validation() {
        assert!(params(1.5, 0.0, true).validate().is_err());
        assert!(params(0.5, -1.0, true).validate().is_err());
        assert!(params(0.5, 0.2, true).validate().is_ok());
    }
}
