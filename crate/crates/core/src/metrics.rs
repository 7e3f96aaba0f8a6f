//! Ranking evaluators: reciprocal rank, nDCG@k with binary gains, and the
//! overlap F1 used by the format reward.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CandidateId, RankingTask, RawRankingOutput, Ranking};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("positive set is empty or names ids absent from the ranking")]
    PositivesMissing,
    #[error("empty batch")]
    EmptyBatch,
    #[error("cutoff k = {k} outside 1..={n}")]
    BadK { k: usize, n: usize },
}

/// Aggregate metrics over an evaluated task set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mrr: f64,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub n_tasks: usize,
}

fn best_positive_rank(ranking: &Ranking, positives: &BTreeSet<CandidateId>) -> Result<usize, MetricError> {
    if positives.is_empty() {
        return Err(MetricError::PositivesMissing);
    }
    let mut best = usize::MAX;
    for p in positives {
        let r = ranking.rank_of(p).ok_or(MetricError::PositivesMissing)?;
        best = best.min(r);
    }
    Ok(best)
}

/// `1 / rank` of the best-ranked positive.
pub fn reciprocal_rank(ranking: &Ranking, positives: &BTreeSet<CandidateId>) -> Result<f64, MetricError> {
    best_positive_rank(ranking, positives).map(|r| 1.0 / r as f64)
}

fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
        n += 1;
    }
    (sum + comp, n)
}

/// Mean by compensated summation followed by one residual-correction
/// pass, so averaging identical values returns that value exactly.
/// `None` for an empty input.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let values: Vec<f64> = values.into_iter().collect();
    let (sum, n) = neumaier_sum(values.iter().copied());
    if n == 0 {
        return None;
    }
    let m = sum / n as f64;
    let (residual, _) = neumaier_sum(values.iter().map(|v| v - m));
    Some(m + residual / n as f64)
}

pub fn mean_mrr<'a, I>(results: I) -> Result<f64, MetricError>
where
    I: IntoIterator<Item = (&'a Ranking, &'a BTreeSet<CandidateId>)>,
{
    let rrs = results
        .into_iter()
        .map(|(ranking, positives)| reciprocal_rank(ranking, positives))
        .collect::<Result<Vec<_>, _>>()?;
    compensated_mean(rrs).ok_or(MetricError::EmptyBatch)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// nDCG@k with binary relevance and discount `1 / log2(rank + 1)`.
pub fn ndcg_at_k(
    ranking: &Ranking,
    positives: &BTreeSet<CandidateId>,
    k: usize,
) -> Result<f64, MetricError> {
    let n = ranking.len();
    if k == 0 || k > n {
        return Err(MetricError::BadK { k, n });
    }
    if positives.is_empty() {
        return Err(MetricError::PositivesMissing);
    }
    let mut ranks = positives
        .iter()
        .map(|p| ranking.rank_of(p).ok_or(MetricError::PositivesMissing))
        .collect::<Result<Vec<_>, _>>()?;
    // Summing in rank order, like the ideal, makes a perfect top-k exactly 1.
    ranks.sort_unstable();
    let dcg: f64 = ranks.iter().filter(|&&r| r <= k).map(|&r| discount(r)).sum();
    let ideal: f64 = (1..=k.min(positives.len())).map(discount).sum();
    Ok(dcg / ideal)
}

/// Harmonic mean of precision `|matched| / emitted` and recall
/// `|matched| / |D|`, where hallucinated and duplicate lines count as
/// emitted but wrong. Computed as `2 |matched| / (emitted + |D|)`, which is
/// the same quantity with a single rounding.
pub fn overlap_f1(raw: &RawRankingOutput, task: &RankingTask) -> f64 {
    let matched = raw.matched.len();
    let emitted = matched + raw.hallucinated_count + raw.duplicates_dropped;
    let total = task.candidates.len();
    if matched == 0 || total == 0 {
        return 0.0;
    }
    (2 * matched) as f64 / (emitted + total) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Candidate, Query, ScenarioSpec};

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn set(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn ranking_with_positive_at(n: usize, rank: usize) -> Ranking {
        let mut order: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        order[rank - 1] = "p".into();
        let universe = order.clone();
        Ranking::from_order(order, universe.iter().map(String::as_str)).unwrap()
    }

    #[test]
    fn reciprocal_rank_examples() {
        let p = set(&["p"]);
        assert_eq!(reciprocal_rank(&ranking_with_positive_at(5, 1), &p), Ok(1.0));
        assert_eq!(reciprocal_rank(&ranking_with_positive_at(5, 4), &p), Ok(0.25));
        let r = Ranking::from_order(ids(&["a", "b", "x", "c", "y"]), ["a", "b", "c", "x", "y"]).unwrap();
        assert_eq!(reciprocal_rank(&r, &set(&["x", "y"])), Ok(1.0 / 3.0));
        assert_eq!(reciprocal_rank(&r, &set(&[])), Err(MetricError::PositivesMissing));
        assert_eq!(reciprocal_rank(&r, &set(&["zz"])), Err(MetricError::PositivesMissing));
    }

    #[test]
    fn compensated_mean_of_repeats_is_exact() {
        for r in 1..=50 {
            let v = 1.0 / r as f64;
            for n in (1..=300).chain([1000, 20_000]) {
                assert_eq!(compensated_mean(std::iter::repeat_n(v, n)), Some(v), "1/{r} x {n}");
            }
        }
        assert_eq!(compensated_mean([0.1, 0.2, 0.3]), Some(0.2));
        assert_eq!(compensated_mean(std::iter::empty()), None);
    }

    #[test]
    fn mean_mrr_examples() {
        let p = set(&["p"]);
        let a = ranking_with_positive_at(6, 2);
        let b = ranking_with_positive_at(6, 5);
        let m = mean_mrr([(&a, &p), (&b, &p)]).unwrap();
        assert!((m - 0.35).abs() < 1e-15);
        let c = ranking_with_positive_at(6, 3);
        let same = mean_mrr([(&c, &p), (&c, &p), (&c, &p)]).unwrap();
        assert_eq!(same, 1.0 / 3.0);
        assert_eq!(mean_mrr(std::iter::empty()), Err(MetricError::EmptyBatch));
    }

    #[test]
    fn ndcg_examples() {
        let p = set(&["p"]);
        for k in 1..=7 {
            assert_eq!(ndcg_at_k(&ranking_with_positive_at(7, 1), &p, k), Ok(1.0));
        }
        let v = ndcg_at_k(&ranking_with_positive_at(7, 3), &p, 5).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&ranking_with_positive_at(7, 6), &p, 5), Ok(0.0));
        assert_eq!(
            ndcg_at_k(&ranking_with_positive_at(7, 6), &p, 8),
            Err(MetricError::BadK { k: 8, n: 7 })
        );
        assert!(ndcg_at_k(&ranking_with_positive_at(7, 6), &p, 0).is_err());
    }

    fn task4() -> RankingTask {
        RankingTask {
            id: "t".into(),
            query: Query::text("q"),
            candidates: (0..4).map(|i| Candidate::new(format!("c{i}"), "x")).collect(),
            positives: set(&["c0"]),
            scenario: ScenarioSpec::synthetic(4, 1, 0),
        }
    }

    #[test]
    fn overlap_f1_examples() {
        let task = task4();
        let perfect = RawRankingOutput::perfect(ids(&["c2", "c0", "c3", "c1"]));
        assert_eq!(overlap_f1(&perfect, &task), 1.0);
        assert_eq!(overlap_f1(&RawRankingOutput::default(), &task), 0.0);
        let partial = RawRankingOutput {
            matched: ids(&["c0", "c1"]),
            hallucinated_count: 1,
            duplicates_dropped: 0,
        };
        assert_eq!(overlap_f1(&partial, &task), 4.0 / 7.0);
        let dup = RawRankingOutput {
            matched: ids(&["c0", "c1", "c2", "c3"]),
            hallucinated_count: 0,
            duplicates_dropped: 1,
        };
        assert!(overlap_f1(&dup, &task) < 1.0);
    }
}
