//! Seeded order manipulation: the pinned generator, seed derivation,
//! Fisher-Yates shuffling, reversal and ranking validation.
//!
//! The generator is ChaCha8 (`rand_chacha`), seeded through
//! `SeedableRng::seed_from_u64`. Bounded integers and unit floats are drawn by
//! the helpers here rather than by `rand`'s distribution code so that the
//! exact stream consumed per shuffle is fixed by this crate alone.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CandidateList, ItemId, Ranking};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
pub fn uniform_below(rng: &mut impl RngCore, n: u64) -> u64 {
    assert!(n > 0, "uniform_below: empty range");
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Uniform float in `[0, 1)` with 53 bits of precision.
pub fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Platform-independent seed derivation from a base seed and a sequence of
/// labelled parts. Results never depend on scheduling or hashing state.
#[derive(Clone, Debug)]
pub struct SeedHasher {
    state: u64,
}

impl SeedHasher {
    pub fn new(base: u64) -> Self {
        SeedHasher { state: splitmix(base) }
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.state = splitmix(self.state ^ splitmix(v));
        self
    }

    pub fn str(self, s: &str) -> Self {
        let len = s.len() as u64;
        self.u64(fnv1a(s.as_bytes())).u64(len)
    }

    pub fn finish(&self) -> u64 {
        splitmix(self.state)
    }
}

/// Seed for one trial: `hash(experiment_seed, user_id, trial_index)`.
pub fn trial_seed(experiment_seed: u64, user_id: &str, trial_index: u64) -> u64 {
    SeedHasher::new(experiment_seed)
        .str("trial")
        .str(user_id)
        .u64(trial_index)
        .finish()
}

/// Fisher-Yates shuffle of a slice under the pinned generator.
pub fn shuffle_in_place<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Uniformly random permutation of `candidates`, fully determined by `seed`.
pub fn shuffle(candidates: &CandidateList, seed: u64) -> CandidateList {
    let mut ids = candidates.ids().to_vec();
    shuffle_in_place(&mut ids, &mut rng(seed));
    CandidateList::from_unchecked(ids)
}

pub fn reverse(candidates: &CandidateList) -> CandidateList {
    let mut ids = candidates.ids().to_vec();
    ids.reverse();
    CandidateList::from_unchecked(ids)
}

/// Why an output sequence is not a permutation of its source list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("not a permutation: missing {missing:?}, duplicates {duplicates:?}, foreign {foreign:?}")]
pub struct Violation {
    pub missing: Vec<ItemId>,
    pub duplicates: Vec<ItemId>,
    pub foreign: Vec<ItemId>,
}

/// Accepts `output` iff it is an exact permutation of `source`.
pub fn validate_ranking(output: &[ItemId], source: &CandidateList) -> Result<Ranking, Violation> {
    let allowed: BTreeSet<&ItemId> = source.ids().iter().collect();
    let mut counts: BTreeMap<&ItemId, usize> = BTreeMap::new();
    let mut violation = Violation::default();
    for id in output {
        let c = counts.entry(id).or_insert(0);
        *c += 1;
        if !allowed.contains(id) {
            if *c == 1 {
                violation.foreign.push(id.clone());
            }
        } else if *c == 2 {
            violation.duplicates.push(id.clone());
        }
    }
    violation.missing = source
        .ids()
        .iter()
        .filter(|id| !counts.contains_key(id))
        .cloned()
        .collect();
    if violation == Violation::default() {
        Ok(Ranking::from_validated(output.to_vec()))
    } else {
        Err(violation)
    }
}
