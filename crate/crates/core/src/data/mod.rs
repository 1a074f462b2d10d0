//! Ratings catalogs and the evaluation-sample pipeline: popularity bins,
//! candidate lists under five popularity distributions, user selection,
//! ground truth and history.

mod amazon;
mod movielens;
mod samples_io;
mod sampling;
mod synthetic;

pub use amazon::load_amazon_books;
pub use movielens::load_movielens;
pub use samples_io::{export_samples, import_samples, SampleLine};
pub use sampling::{
    build_eval_sample, distribution_slice, draw_samples, intertwined_pattern, popularity_bins, popularity_order,
    sample_candidates, split_bins, DistributionKind, DrawnSample, DEFAULT_HISTORY_LEN,
};
pub use synthetic::{synthetic_catalog, synthetic_title, SyntheticSpec};

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Item, ItemId};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("required file {0} not found")]
    MissingFile(PathBuf),
    #[error("no interactions")]
    NoInteractions,
    #[error("need at least {needed} items with interactions, found {available}")]
    TooFewItems { needed: usize, available: usize },
    #[error("{distribution:?} slice holds {size} items, fewer than K = {k}")]
    SliceTooSmall {
        distribution: DistributionKind,
        size: usize,
        k: usize,
    },
    #[error("no qualifying user found after {attempts} candidate draws")]
    NoQualifyingUser { attempts: usize },
    #[error("invalid sample on line {line}: {reason}")]
    BadSample { line: usize, reason: String },
    #[error("K must be at least 1")]
    ZeroK,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: ItemId,
    pub rating: u8,
    pub timestamp: i64,
}

/// Counters for input lines that were not loaded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub skipped_lines: usize,
    pub unknown_items: usize,
    pub duplicates_replaced: usize,
}

/// Items plus user ratings, immutable once built.
#[derive(Clone, Debug)]
pub struct Catalog {
    items: BTreeMap<ItemId, Item>,
    interactions: Vec<Interaction>,
    by_item: HashMap<ItemId, Vec<usize>>,
    by_user: BTreeMap<String, Vec<usize>>,
    pub stats: LoadStats,
}

impl Catalog {
    /// Builds a catalog from `(id, title)` pairs and interactions. Popularity
    /// is recomputed as the interaction count. Interactions on unknown items
    /// or with ratings outside 1..=5 are dropped and counted.
    pub fn new(
        items: impl IntoIterator<Item = (ItemId, String)>,
        interactions: impl IntoIterator<Item = Interaction>,
        mut stats: LoadStats,
    ) -> Result<Self, DataError> {
        let mut items: BTreeMap<ItemId, Item> = items
            .into_iter()
            .filter(|(id, _)| !id.as_str().is_empty())
            .map(|(id, title)| {
                (
                    id.clone(),
                    Item {
                        id,
                        title,
                        popularity: 0,
                    },
                )
            })
            .collect();
        let mut kept = Vec::new();
        for it in interactions {
            if !(1..=5).contains(&it.rating) {
                stats.skipped_lines += 1;
                continue;
            }
            match items.get_mut(&it.item_id) {
                Some(item) => {
                    item.popularity += 1;
                    kept.push(it);
                }
                None => stats.unknown_items += 1,
            }
        }
        if kept.is_empty() {
            return Err(DataError::NoInteractions);
        }
        let mut by_item: HashMap<ItemId, Vec<usize>> = HashMap::new();
        let mut by_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, it) in kept.iter().enumerate() {
            by_item.entry(it.item_id.clone()).or_default().push(i);
            by_user.entry(it.user_id.clone()).or_default().push(i);
        }
        Ok(Catalog {
            items,
            interactions: kept,
            by_item,
            by_user,
            stats,
        })
    }

    pub fn items(&self) -> &BTreeMap<ItemId, Item> {
        &self.items
    }

    pub fn item(&self, id: &ItemId) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn user_count(&self) -> usize {
        self.by_user.len()
    }

    pub fn user_interactions(&self, user: &str) -> impl Iterator<Item = &Interaction> {
        self.by_user
            .get(user)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn raters(&self, item: &ItemId) -> impl Iterator<Item = &Interaction> {
        self.by_item
            .get(item)
            .into_iter()
            .flatten()
            .map(move |&i| &self.interactions[i])
    }

    pub fn title<'a>(&'a self, id: &'a ItemId) -> &'a str {
        self.items.get(id).map(|i| i.title.as_str()).unwrap_or(id.as_str())
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_owned())
        } else {
            DataError::Io {
                path: path.to_owned(),
                source,
            }
        }
    })
}

/// UTF-8 if valid, otherwise Latin-1 (the encoding of the MovieLens-1M dumps).
pub(crate) fn decode_text(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn popularity_is_interaction_count() {
        let items = vec![(ItemId::new("a"), "A".to_string()), (ItemId::new("b"), "B".to_string())];
        let ints = vec![
            Interaction {
                user_id: "1".into(),
                item_id: "a".into(),
                rating: 5,
                timestamp: 1,
            },
            Interaction {
                user_id: "2".into(),
                item_id: "a".into(),
                rating: 3,
                timestamp: 2,
            },
            Interaction {
                user_id: "2".into(),
                item_id: "zz".into(),
                rating: 3,
                timestamp: 2,
            },
            Interaction {
                user_id: "2".into(),
                item_id: "b".into(),
                rating: 9,
                timestamp: 2,
            },
        ];
        let c = Catalog::new(items, ints, LoadStats::default()).unwrap();
        assert_eq!(c.item(&"a".into()).unwrap().popularity, 2);
        assert_eq!(c.item(&"b".into()).unwrap().popularity, 0);
        assert_eq!(c.stats.unknown_items, 1);
        assert_eq!(c.stats.skipped_lines, 1);
        assert_eq!(c.user_count(), 2);
    }

    #[test]
    fn latin1_fallback() {
        assert_eq!(decode_text(vec![b'C', 0xE9, b'z']), "Céz");
        assert_eq!(decode_text("é".as_bytes().to_vec()), "é");
    }
}
