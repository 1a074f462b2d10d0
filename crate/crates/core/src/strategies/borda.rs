use std::collections::HashMap;

use crate::order::validate_ranking;
use crate::types::{CandidateList, ItemId, Ranking};

use super::StrategyError;

/// Borda count over rankings of the same K items.
///
/// The item at 0-based position `p` earns `K - p` points per list. Ties on
/// total points go to the better best position across lists, then to the
/// smaller id.
pub fn borda_aggregate<R: AsRef<[ItemId]>>(rankings: &[R]) -> Result<Ranking, StrategyError> {
    let first = rankings.first().ok_or(StrategyError::EmptyAggregation)?.as_ref();
    let source = CandidateList::new(first.to_vec()).map_err(|e| StrategyError::InvalidInput(e.to_string()))?;
    let k = first.len() as u64;
    let mut score: HashMap<&ItemId, (u64, usize)> = HashMap::with_capacity(first.len());
    for r in rankings {
        let r = r.as_ref();
        validate_ranking(r, &source).map_err(StrategyError::NotAPermutation)?;
        for (pos, id) in r.iter().enumerate() {
            let e = score.entry(id).or_insert((0, usize::MAX));
            e.0 += k - pos as u64;
            e.1 = e.1.min(pos);
        }
    }
    let mut order: Vec<&ItemId> = first.iter().collect();
    order.sort_by(|a, b| {
        let (sa, ba) = score[a];
        let (sb, bb) = score[b];
        sb.cmp(&sa).then(ba.cmp(&bb)).then(a.cmp(b))
    });
    let ids: Vec<ItemId> = order.into_iter().cloned().collect();
    validate_ranking(&ids, &source).map_err(StrategyError::NotAPermutation)
}
