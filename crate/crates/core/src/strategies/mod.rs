//! Prompting strategies: one-shot list-wise ranking, bootstrapped list-wise
//! ranking with Borda aggregation, and ranking by iterative selection
//! (`rise@N`: ask for the N best remaining items until none are left).

mod borda;
mod prompt;

pub use borda::borda_aggregate;
pub use prompt::{build_rise_prompt, build_standard_prompt, Domain, PromptBundle, STANDARD_FORMAT};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    parse_and_match_with, Backend, BackendError, CallContext, CompletionRequest, ParsePolicy, Parsed, TranscriptRecord,
    DEFAULT_SIMILARITY,
};
use crate::metrics::LegFailure;
use crate::order::{shuffle, validate_ranking, SeedHasher, Violation};
use crate::types::{CandidateList, EvalSample, ItemId, Provenance, Ranking, RepairFlags};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no usable answer after {attempts} attempts: {reason}")]
    Unrepairable { attempts: usize, reason: String },
    #[error("bootstrap group {group} failed: {reason}")]
    GroupFailed { group: usize, reason: String },
    #[error("output is not a permutation of the candidates: {0}")]
    NotAPermutation(Violation),
    #[error("nothing to aggregate")]
    EmptyAggregation,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
}

impl From<StrategyError> for LegFailure {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Backend(b) => LegFailure::Backend(b.to_string()),
            other => LegFailure::Unrepairable(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Standard,
    Bootstrap,
    Rise,
}

/// A strategy and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Items requested per iteration (rise only).
    #[serde(default = "one")]
    pub rise_n: usize,
    /// Total bootstrap prompts.
    #[serde(default = "nine")]
    pub bootstrap_total: usize,
    /// Bootstrap prompts aggregated into one ranking.
    #[serde(default = "three")]
    pub group_size: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "two")]
    pub max_repair_retries: u32,
    #[serde(default)]
    pub parse_policy: ParsePolicy,
    #[serde(default = "similarity")]
    pub similarity_threshold: f64,
    /// Reshuffle the remaining pool before every rise iteration after the first.
    #[serde(default)]
    pub reshuffle_each_iteration: bool,
    #[serde(default)]
    pub domain: Domain,
}

fn one() -> usize {
    1
}
fn two() -> u32 {
    2
}
fn three() -> usize {
    3
}
fn nine() -> usize {
    9
}
fn similarity() -> f64 {
    DEFAULT_SIMILARITY
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            rise_n: 1,
            bootstrap_total: 9,
            group_size: 3,
            temperature: 0.0,
            max_repair_retries: 2,
            parse_policy: ParsePolicy::Repair,
            similarity_threshold: DEFAULT_SIMILARITY,
            reshuffle_each_iteration: false,
            domain: Domain::Movies,
        }
    }

    pub fn standard() -> Self {
        Self::new(StrategyKind::Standard)
    }

    pub fn bootstrap() -> Self {
        Self::new(StrategyKind::Bootstrap)
    }

    pub fn rise(n: usize) -> Self {
        StrategyConfig {
            rise_n: n,
            ..Self::new(StrategyKind::Rise)
        }
    }

    /// `standard`, `bootstrap` or `rise@N`.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Standard => "standard".into(),
            StrategyKind::Bootstrap => "bootstrap".into(),
            StrategyKind::Rise => format!("rise@{}", self.rise_n),
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), StrategyError> {
        match self.kind {
            StrategyKind::Rise if self.rise_n == 0 || self.rise_n > k => Err(StrategyError::InvalidConfig(format!(
                "rise needs 1 <= N <= K, got N = {} with K = {k}",
                self.rise_n
            ))),
            StrategyKind::Bootstrap
                if self.group_size == 0
                    || self.bootstrap_total == 0
                    || !self.bootstrap_total.is_multiple_of(self.group_size) =>
            {
                Err(StrategyError::InvalidConfig(format!(
                    "bootstrap total {} must be a positive multiple of group size {}",
                    self.bootstrap_total, self.group_size
                )))
            }
            _ if self.temperature.is_nan() || self.temperature < 0.0 => {
                Err(StrategyError::InvalidConfig("temperature must be >= 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Backend calls needed for one ranking of `k` candidates, excluding re-prompts.
    pub fn calls_per_ranking(&self, k: usize) -> usize {
        match self.kind {
            StrategyKind::Standard => 1,
            StrategyKind::Bootstrap => self.bootstrap_total,
            StrategyKind::Rise => k.div_ceil(self.rise_n.max(1)),
        }
    }

    /// Rankings produced per call of [`rank`].
    pub fn outputs_per_ranking(&self) -> usize {
        match self.kind {
            StrategyKind::Bootstrap => self.bootstrap_total / self.group_size.max(1),
            _ => 1,
        }
    }
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for StrategyConfig {
    type Err = StrategyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "standard" => Ok(Self::standard()),
            "bootstrap" | "bootstrapping" => Ok(Self::bootstrap()),
            "rise" => Ok(Self::rise(1)),
            _ => lower
                .strip_prefix("rise@")
                .and_then(|n| n.parse().ok())
                .map(Self::rise)
                .ok_or_else(|| StrategyError::InvalidConfig(format!("unknown strategy `{s}`"))),
        }
    }
}

/// Transcript records and call count accumulated while ranking.
#[derive(Debug, Default)]
pub struct CallLog {
    pub records: Vec<TranscriptRecord>,
    pub calls: usize,
}

/// One ranking job: who answers, what to log, and the call identity prefix.
pub struct Session<'a> {
    pub backend: &'a dyn Backend,
    pub context: CallContext,
    pub log: &'a mut CallLog,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn Backend, context: CallContext, log: &'a mut CallLog) -> Self {
        Session { backend, context, log }
    }

    /// Prompts until the answer parses, re-prompting up to the retry budget.
    fn ask(
        &mut self,
        sample: &EvalSample,
        presented: &CandidateList,
        expected: usize,
        prompt: &PromptBundle,
        config: &StrategyConfig,
        attempt_offset: usize,
    ) -> Result<Parsed, StrategyError> {
        let attempts = config.max_repair_retries as usize + 1;
        let mut last = String::new();
        for a in 0..attempts {
            self.context.attempt = attempt_offset + a;
            let request = CompletionRequest {
                prompt,
                sample,
                presented,
                expected_count: expected,
                temperature: config.temperature,
                context: &self.context,
            };
            self.log.calls += 1;
            let completion = self.backend.complete(&request);
            let (text, latency_ms) = match &completion {
                Ok(c) => (c.text.clone(), c.latency.as_millis() as u64),
                Err(_) => (String::new(), 0),
            };
            let parsed = completion.as_ref().map_err(|e| e.clone()).map(|_| {
                parse_and_match_with(
                    &text,
                    expected,
                    presented,
                    sample.titles(),
                    config.parse_policy,
                    config.similarity_threshold,
                )
            });
            let (outcome, repairs) = match &parsed {
                Err(e) => (format!("backend_error: {e}"), RepairFlags::default()),
                Ok(Ok(p)) if p.repairs.is_clean() => ("ok".to_owned(), p.repairs.clone()),
                Ok(Ok(p)) => ("repaired".to_owned(), p.repairs.clone()),
                Ok(Err(e)) => (format!("failed: {e}"), RepairFlags::default()),
            };
            self.log.records.push(TranscriptRecord {
                run_id: self.context.run_id.clone(),
                key: call_key(&self.context),
                user_id: self.context.user_id.clone(),
                trial: self.context.trial,
                leg: self.context.leg,
                strategy: self.context.strategy.clone(),
                iteration: self.context.iteration,
                attempt: self.context.attempt,
                prompt: prompt.render(),
                response: text,
                parse_outcome: outcome,
                repairs,
                latency_ms,
            });
            match parsed {
                Err(e) => return Err(StrategyError::Backend(e)),
                Ok(Ok(mut p)) => {
                    p.repairs.retries = a as u32;
                    return Ok(p);
                }
                Ok(Err(e)) => last = e.to_string(),
            }
        }
        Err(StrategyError::Unrepairable { attempts, reason: last })
    }
}

/// Deterministic identity of a single call.
pub fn call_key(ctx: &CallContext) -> String {
    format!(
        "{}/t{}/{}/{}/i{}/a{}",
        ctx.sample_key,
        ctx.trial,
        ctx.leg.map(|l| l.as_str()).unwrap_or("-"),
        ctx.strategy,
        ctx.iteration,
        ctx.attempt
    )
}

fn check_order(sample: &EvalSample, order: &CandidateList) -> Result<(), StrategyError> {
    if sample.candidates().same_items(order) {
        Ok(())
    } else {
        Err(StrategyError::InvalidInput(
            "order is not a permutation of the sample's candidates".into(),
        ))
    }
}

fn standard_once(
    sample: &EvalSample,
    order: &CandidateList,
    config: &StrategyConfig,
    session: &mut Session<'_>,
    attempt_offset: usize,
) -> Result<(Vec<ItemId>, RepairFlags), StrategyError> {
    let prompt = build_standard_prompt(sample, order, config.domain);
    let parsed = session.ask(sample, order, order.len(), &prompt, config, attempt_offset)?;
    validate_ranking(&parsed.ids, order).map_err(StrategyError::NotAPermutation)?;
    Ok((parsed.ids, parsed.repairs))
}

/// One list-wise prompt over `order`, parsed into a full ranking.
pub fn standard_rank(
    sample: &EvalSample,
    order: &CandidateList,
    config: &StrategyConfig,
    seed: u64,
    session: &mut Session<'_>,
) -> Result<Ranking, StrategyError> {
    check_order(sample, order)?;
    session.context.strategy = config.label();
    session.context.iteration = 0;
    let (ids, repairs) = standard_once(sample, order, config, session, 0)?;
    let ranking = validate_ranking(&ids, order).map_err(StrategyError::NotAPermutation)?;
    Ok(ranking.with_provenance(Provenance {
        strategy: config.label(),
        seed,
        repairs,
    }))
}

/// `bootstrap_total` list-wise prompts over independently seeded shuffles of
/// `order`, Borda-aggregated in consecutive groups of `group_size`.
///
/// A member whose answer is unrepairable is re-asked once on a fresh shuffle;
/// if that also fails its group is reported as failed. Backend errors abort.
pub fn bootstrap_rank(
    sample: &EvalSample,
    order: &CandidateList,
    config: &StrategyConfig,
    seed: u64,
    session: &mut Session<'_>,
) -> Result<Vec<Result<Ranking, StrategyError>>, StrategyError> {
    check_order(sample, order)?;
    config.validate(order.len())?;
    session.context.strategy = config.label();
    let fresh_offset = config.max_repair_retries as usize + 1;
    let mut members: Vec<Result<(Vec<ItemId>, RepairFlags), StrategyError>> =
        Vec::with_capacity(config.bootstrap_total);
    for m in 0..config.bootstrap_total {
        session.context.iteration = m;
        let member_seed = SeedHasher::new(seed).str("bootstrap").u64(m as u64).finish();
        let shuffled = shuffle(order, member_seed);
        let result = match standard_once(sample, &shuffled, config, session, 0) {
            Err(StrategyError::Unrepairable { .. }) | Err(StrategyError::NotAPermutation(_)) => {
                let retry_seed = SeedHasher::new(member_seed).str("fresh").finish();
                standard_once(sample, &shuffle(order, retry_seed), config, session, fresh_offset)
            }
            other => other,
        };
        if let Err(StrategyError::Backend(e)) = result {
            return Err(StrategyError::Backend(e));
        }
        members.push(result);
    }

    let groups = members
        .chunks(config.group_size)
        .enumerate()
        .map(|(g, chunk)| {
            let mut lists = Vec::with_capacity(chunk.len());
            let mut repairs = RepairFlags::default();
            for member in chunk {
                match member {
                    Ok((ids, r)) => {
                        lists.push(ids.clone());
                        repairs.merge(r.clone());
                    }
                    Err(e) => {
                        return Err(StrategyError::GroupFailed {
                            group: g,
                            reason: e.to_string(),
                        })
                    }
                }
            }
            let agg = borda_aggregate(&lists)?;
            Ok(agg.with_provenance(Provenance {
                strategy: config.label(),
                seed,
                repairs,
            }))
        })
        .collect();
    Ok(groups)
}

/// Ranking by iterative selection: repeatedly ask for the `rise_n` best of
/// the remaining candidates, append them, and remove them from the pool.
/// The final iteration asks for whatever remains. Issues `ceil(K / N)` calls
/// when every answer parses first time.
pub fn rise_rank(
    sample: &EvalSample,
    order: &CandidateList,
    config: &StrategyConfig,
    seed: u64,
    session: &mut Session<'_>,
) -> Result<Ranking, StrategyError> {
    check_order(sample, order)?;
    config.validate(order.len())?;
    session.context.strategy = config.label();
    let mut remaining: Vec<ItemId> = order.ids().to_vec();
    let mut ranked: Vec<ItemId> = Vec::with_capacity(order.len());
    let mut repairs = RepairFlags::default();
    let mut iteration = 0;
    while !remaining.is_empty() {
        session.context.iteration = iteration;
        let count = config.rise_n.min(remaining.len());
        let mut pool = CandidateList::new(remaining.clone()).map_err(|e| StrategyError::InvalidInput(e.to_string()))?;
        if config.reshuffle_each_iteration && iteration > 0 {
            pool = shuffle(&pool, SeedHasher::new(seed).str("rise").u64(iteration as u64).finish());
        }
        let prompt = build_rise_prompt(sample, &pool, count, config.domain);
        let parsed = session.ask(sample, &pool, count, &prompt, config, 0)?;
        remaining.retain(|id| !parsed.ids.contains(id));
        ranked.extend(parsed.ids);
        repairs.merge(parsed.repairs);
        iteration += 1;
    }
    let ranking = validate_ranking(&ranked, order).map_err(StrategyError::NotAPermutation)?;
    Ok(ranking.with_provenance(Provenance {
        strategy: config.label(),
        seed,
        repairs,
    }))
}

/// Dispatches on the strategy kind. The outer error is a backend failure
/// (the whole ranking is lost); inner errors mark individual outputs that
/// could not be produced. Standard and rise yield one output, bootstrap one
/// per group.
pub fn rank(
    sample: &EvalSample,
    order: &CandidateList,
    config: &StrategyConfig,
    seed: u64,
    session: &mut Session<'_>,
) -> Result<Vec<Result<Ranking, StrategyError>>, StrategyError> {
    let single = |r: Result<Ranking, StrategyError>| match r {
        Err(StrategyError::Backend(e)) => Err(StrategyError::Backend(e)),
        Err(e @ (StrategyError::InvalidConfig(_) | StrategyError::InvalidInput(_))) => Err(e),
        other => Ok(vec![other]),
    };
    match config.kind {
        StrategyKind::Standard => single(standard_rank(sample, order, config, seed, session)),
        StrategyKind::Rise => single(rise_rank(sample, order, config, seed, session)),
        StrategyKind::Bootstrap => bootstrap_rank(sample, order, config, seed, session),
    }
}
