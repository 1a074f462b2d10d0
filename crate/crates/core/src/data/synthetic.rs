//! A seeded synthetic ratings catalog for dataset-free runs and tests.

use serde::{Deserialize, Serialize};

use super::{Catalog, DataError, Interaction, LoadStats};
use crate::order::{rng, uniform_f64, SeedHasher};
use crate::types::ItemId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_items")]
    pub items: usize,
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default = "default_per_user")]
    pub ratings_per_user: usize,
    /// Zipf exponent of item popularity.
    #[serde(default = "default_skew")]
    pub popularity_skew: f64,
}

fn default_items() -> usize {
    600
}
fn default_users() -> usize {
    1500
}
fn default_per_user() -> usize {
    60
}
fn default_skew() -> f64 {
    0.8
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            items: default_items(),
            users: default_users(),
            ratings_per_user: default_per_user(),
            popularity_skew: default_skew(),
        }
    }
}

const ADJECTIVES: [&str; 24] = [
    "Silent",
    "Crimson",
    "Hidden",
    "Broken",
    "Golden",
    "Frozen",
    "Distant",
    "Electric",
    "Wild",
    "Midnight",
    "Burning",
    "Lonely",
    "Iron",
    "Velvet",
    "Hollow",
    "Restless",
    "Savage",
    "Gentle",
    "Wandering",
    "Bitter",
    "Radiant",
    "Secret",
    "Painted",
    "Northern",
];
const NOUNS: [&str; 25] = [
    "Harbor",
    "Empire",
    "Garden",
    "River",
    "Mirror",
    "Orchard",
    "Frontier",
    "Lantern",
    "Kingdom",
    "Voyage",
    "Canyon",
    "Circus",
    "Archive",
    "Meadow",
    "Station",
    "Tide",
    "Compass",
    "Cathedral",
    "Prairie",
    "Signal",
    "Island",
    "Carnival",
    "Horizon",
    "Labyrinth",
    "Citadel",
];

/// Deterministic, pairwise-distinct title for synthetic item `i`.
pub fn synthetic_title(i: usize) -> String {
    let adj = ADJECTIVES[i % ADJECTIVES.len()];
    let noun = NOUNS[(i / ADJECTIVES.len()) % NOUNS.len()];
    let cycle = i / (ADJECTIVES.len() * NOUNS.len());
    let year = 1950 + (i * 7) % 70;
    if cycle == 0 {
        format!("The {adj} {noun} ({year})")
    } else {
        format!("The {adj} {noun} Part {} ({year})", cycle + 1)
    }
}

/// Users rate items drawn without replacement with Zipf-skewed popularity;
/// ratings are seeded pseudo-random on the 1-5 scale.
pub fn synthetic_catalog(spec: &SyntheticSpec, seed: u64) -> Result<Catalog, DataError> {
    let items: Vec<(ItemId, String)> = (0..spec.items)
        .map(|i| (ItemId::new(format!("s{i:05}")), synthetic_title(i)))
        .collect();
    let weights: Vec<f64> = (0..spec.items)
        .map(|i| 1.0 / ((i + 1) as f64).powf(spec.popularity_skew))
        .collect();
    let per_user = spec.ratings_per_user.min(spec.items);
    let mut interactions = Vec::with_capacity(spec.users * per_user);
    for u in 0..spec.users {
        let mut r = rng(SeedHasher::new(seed).str("synthetic-user").u64(u as u64).finish());
        let mut w = weights.clone();
        let mut total: f64 = w.iter().sum();
        for n in 0..per_user {
            let mut target = uniform_f64(&mut r) * total;
            let mut pick = w.len() - 1;
            for (i, wi) in w.iter().enumerate() {
                if *wi > 0.0 && target < *wi {
                    pick = i;
                    break;
                }
                target -= wi;
            }
            while w[pick] == 0.0 {
                pick -= 1;
            }
            total -= w[pick];
            w[pick] = 0.0;
            let rating = 1 + (uniform_f64(&mut r) * 5.0) as u8;
            interactions.push(Interaction {
                user_id: format!("user{u}"),
                item_id: items[pick].0.clone(),
                rating: rating.min(5),
                timestamp: 1_000_000 + n as i64,
            });
        }
    }
    Catalog::new(items, interactions, LoadStats::default())
}
