use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;
use serde::Deserialize;

use super::{decode_text, read_file, Catalog, DataError, Interaction, LoadStats};
use crate::types::ItemId;

#[derive(Deserialize)]
struct Review {
    #[serde(rename = "reviewerID")]
    reviewer_id: String,
    asin: String,
    overall: f64,
    #[serde(rename = "unixReviewTime", default)]
    unix_review_time: i64,
}

#[derive(Deserialize)]
struct Meta {
    asin: String,
    #[serde(default)]
    title: Option<String>,
}

/// Loads an Amazon review dump (JSON lines with `reviewerID`, `asin`,
/// `overall`, `unixReviewTime`) and an optional metadata file mapping `asin`
/// to `title`. Repeated (user, item) pairs keep the latest review.
pub fn load_amazon_books(reviews: &Path, metadata: Option<&Path>) -> Result<Catalog, DataError> {
    let text = decode_text(read_file(reviews)?);
    let mut stats = LoadStats::default();
    let mut latest: HashMap<(String, String), Interaction> = HashMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let review: Review = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(_) => {
                stats.skipped_lines += 1;
                continue;
            }
        };
        let rating = review.overall.round();
        if !(1.0..=5.0).contains(&rating) || review.reviewer_id.is_empty() || review.asin.is_empty() {
            stats.skipped_lines += 1;
            continue;
        }
        let it = Interaction {
            user_id: review.reviewer_id.clone(),
            item_id: ItemId::new(review.asin.clone()),
            rating: rating as u8,
            timestamp: review.unix_review_time,
        };
        let key = (review.reviewer_id, review.asin);
        match latest.get(&key) {
            Some(prev) => {
                stats.duplicates_replaced += 1;
                if it.timestamp >= prev.timestamp {
                    latest.insert(key, it);
                }
            }
            None => {
                latest.insert(key, it);
            }
        }
    }
    if latest.is_empty() {
        return Err(DataError::NoInteractions);
    }

    let mut titles: BTreeMap<ItemId, String> = BTreeMap::new();
    if let Some(meta) = metadata {
        let text = decode_text(read_file(meta)?);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<Meta>(line) {
                Ok(Meta { asin, title: Some(t) }) if !t.trim().is_empty() => {
                    titles.insert(ItemId::new(asin), t.trim().to_owned());
                }
                Ok(_) => {}
                Err(_) => stats.skipped_lines += 1,
            }
        }
    }
    if stats.skipped_lines > 0 {
        warn!("amazon: skipped {} unparseable lines", stats.skipped_lines);
    }

    let mut interactions: Vec<Interaction> = latest.into_values().collect();
    interactions.sort_by(|a, b| (&a.user_id, &a.item_id, a.timestamp).cmp(&(&b.user_id, &b.item_id, b.timestamp)));
    let mut items: BTreeMap<ItemId, String> = BTreeMap::new();
    for it in &interactions {
        items.entry(it.item_id.clone()).or_insert_with(|| {
            titles
                .get(&it.item_id)
                .cloned()
                .unwrap_or_else(|| it.item_id.to_string())
        });
    }
    Catalog::new(items, interactions, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn reviews_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let reviews = dir.path().join("reviews.jsonl");
        let meta = dir.path().join("meta.jsonl");
        let mut f = std::fs::File::create(&reviews).unwrap();
        writeln!(
            f,
            r#"{{"reviewerID":"u1","asin":"B1","overall":5.0,"unixReviewTime":10}}"#
        )
        .unwrap();
        writeln!(
            f,
            r#"{{"reviewerID":"u1","asin":"B1","overall":2.0,"unixReviewTime":20}}"#
        )
        .unwrap();
        writeln!(
            f,
            r#"{{"reviewerID":"u1","asin":"B1","overall":4.0,"unixReviewTime":15}}"#
        )
        .unwrap();
        writeln!(f, r#"{{"reviewerID":"u2","asin":"B2"}}"#).unwrap();
        writeln!(
            f,
            r#"{{"reviewerID":"u2","asin":"B3","overall":3.0,"unixReviewTime":1}}"#
        )
        .unwrap();
        writeln!(f, "not json").unwrap();
        let mut m = std::fs::File::create(&meta).unwrap();
        writeln!(m, r#"{{"asin":"B1","title":"Dune"}}"#).unwrap();

        let c = load_amazon_books(&reviews, Some(&meta)).unwrap();
        assert_eq!(c.interactions().len(), 2);
        let b1: Vec<_> = c.raters(&"B1".into()).collect();
        assert_eq!((b1.len(), b1[0].rating, b1[0].timestamp), (1, 2, 20));
        assert_eq!(c.title(&"B1".into()), "Dune");
        assert_eq!(c.title(&"B3".into()), "B3");
        assert_eq!(c.stats.skipped_lines, 2);
        assert_eq!(c.stats.duplicates_replaced, 2);
    }
}
