//! Measuring and mitigating position bias in LLM-based ranking.
//!
//! The crate is organized bottom-up:
//!
//! * [`types`] and [`order`]: items, candidate lists, rankings and seeded
//!   shuffling.
//! * [`metrics`]: Kendall's tau, positional consistency, output similarity,
//!   input sensitivity, Recall@K and NDCG@K.
//! * [`backend`]: the ranker abstraction (HTTP chat-completions client and
//!   simulated biased rankers) plus the answer parser.
//! * [`strategies`]: standard list-wise prompting, bootstrapping with Borda
//!   aggregation, and iterative selection (`rise@N`).
//! * [`data`]: MovieLens / Amazon loaders and candidate/user sampling.
//! * [`runner`]: seeded, resumable experiment runs and report emission.

pub mod backend;
pub mod data;
pub mod metrics;
pub mod order;
pub mod runner;
pub mod strategies;
pub mod types;

pub use backend::{Backend, BackendSpec, SimulatorBackend, SimulatorParams, SimulatorPreset};
pub use data::{Catalog, DistributionKind, DrawnSample};
pub use metrics::{kendall_tau, MetricSummary, TauResult};
pub use order::{reverse, shuffle, validate_ranking, Violation};
pub use runner::{ExperimentConfig, RunReport};
pub use strategies::{StrategyConfig, StrategyKind};
pub use types::{CandidateList, EvalSample, Item, ItemId, Ranking};
