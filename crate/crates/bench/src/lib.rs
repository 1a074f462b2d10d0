//! Shared inputs for the benchmarks.

use posbias_core::data::{draw_samples, synthetic_catalog, DistributionKind, SyntheticSpec};
use posbias_core::order::{rng, shuffle_in_place};
use posbias_core::types::{EvalSample, ItemId};

/// `n` distinct ids in a seeded random order.
pub fn permuted_ids(n: usize, seed: u64) -> Vec<ItemId> {
    let mut v: Vec<ItemId> = (0..n).map(|i| ItemId::new(format!("i{i}"))).collect();
    shuffle_in_place(&mut v, &mut rng(seed));
    v
}

/// One evaluation sample with `k` candidates from the default synthetic catalog.
pub fn sample(k: usize) -> EvalSample {
    let catalog = synthetic_catalog(&SyntheticSpec::default(), 1).expect("synthetic catalog");
    draw_samples(&catalog, k, DistributionKind::Full, 1, 10, 1)
        .expect("samples")
        .remove(0)
        .sample
}

/// A numbered answer listing the sample's candidates in presented order,
/// with lowercase titles so matching takes the normalized path.
pub fn numbered_answer(sample: &EvalSample) -> String {
    sample
        .candidates()
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| format!("{}. {}\n", i + 1, sample.title(id).to_lowercase()))
        .collect()
}
