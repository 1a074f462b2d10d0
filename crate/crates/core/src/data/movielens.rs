use std::path::Path;

use log::warn;

use super::{decode_text, read_file, Catalog, DataError, Interaction, LoadStats};
use crate::types::ItemId;

fn parse_rating(line: &str) -> Option<Interaction> {
    let mut f = line.split("::");
    let user = f.next()?.trim();
    let item = f.next()?.trim();
    let rating: u8 = f.next()?.trim().parse().ok()?;
    let ts: i64 = f.next()?.trim().parse().ok()?;
    if user.is_empty() || item.is_empty() || f.next().is_some() {
        return None;
    }
    Some(Interaction {
        user_id: user.to_owned(),
        item_id: ItemId::new(item),
        rating,
        timestamp: ts,
    })
}

fn parse_movie(line: &str) -> Option<(ItemId, String)> {
    let mut f = line.splitn(3, "::");
    let id = f.next()?.trim();
    let title = f.next()?.trim();
    if id.is_empty() || title.is_empty() {
        return None;
    }
    Some((ItemId::new(id), title.to_owned()))
}

/// Loads `ratings.dat` and `movies.dat` (`::`-separated) from `dir`.
pub fn load_movielens(dir: &Path) -> Result<Catalog, DataError> {
    let ratings = decode_text(read_file(&dir.join("ratings.dat"))?);
    let movies = decode_text(read_file(&dir.join("movies.dat"))?);
    let mut stats = LoadStats::default();

    let mut items = Vec::new();
    for line in movies.lines().filter(|l| !l.trim().is_empty()) {
        match parse_movie(line) {
            Some(m) => items.push(m),
            None => stats.skipped_lines += 1,
        }
    }
    let mut interactions = Vec::new();
    for line in ratings.lines().filter(|l| !l.trim().is_empty()) {
        match parse_rating(line) {
            Some(i) => interactions.push(i),
            None => stats.skipped_lines += 1,
        }
    }
    if interactions.is_empty() {
        return Err(DataError::NoInteractions);
    }
    if stats.skipped_lines > 0 {
        warn!("movielens: skipped {} malformed lines", stats.skipped_lines);
    }
    Catalog::new(items, interactions, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rating_line() {
        let i = parse_rating("1::1193::5::978300760").unwrap();
        assert_eq!(i.user_id, "1");
        assert_eq!(i.item_id, ItemId::new("1193"));
        assert_eq!(i.rating, 5);
        assert_eq!(i.timestamp, 978300760);
        assert!(parse_rating("1::1193::x::978300760").is_none());
        assert!(parse_rating("1::1193::5").is_none());
    }

    #[test]
    fn movie_line() {
        let (id, title) = parse_movie("1::Toy Story (1995)::Animation|Children's|Comedy").unwrap();
        assert_eq!(id, ItemId::new("1"));
        assert_eq!(title, "Toy Story (1995)");
    }
}
