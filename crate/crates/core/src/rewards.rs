//! Closed-form rewards: the composite one-shot ranking reward, the per-step
//! exclusion reward, and the routing utility used to label routing tasks.

use std::collections::HashSet;

use thiserror::Error;

use crate::metrics::{overlap_f1, reciprocal_rank};
use crate::types::{RankingTask, RawRankingOutput, Ranking, RewardBreakdown, RoutingWeights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("candidate {0:?} is not part of the task")]
    UnknownCandidate(String),
    #[error("routing weights must be non-negative with a positive sum, got ({0}, {1})")]
    BadWeights(f64, f64),
    #[error("routing tables disagree in length ({0} effectiveness vs {1} cost)")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RewardOptions {
    /// Score an imperfect output's ranking reward as 0 instead of computing
    /// it on the normalized ranking.
    pub strict_ra_zero: bool,
}

/// Completes a possibly partial output into a full ranking: matched ids in
/// emitted order, then every omitted candidate in task order.
pub fn normalize_ranking(raw: &RawRankingOutput, task: &RankingTask) -> Ranking {
    let mut seen = HashSet::new();
    let mut order: Vec<String> = Vec::with_capacity(task.len());
    let emitted = raw.matched.iter().map(String::as_str);
    for id in emitted.chain(task.candidate_ids()) {
        if task.candidate(id).is_some() && seen.insert(id) {
            order.push(id.to_string());
        }
    }
    Ranking::from_order(order, task.candidate_ids()).expect("normalized order is a permutation")
}

pub fn ranking_reward(raw: &RawRankingOutput, task: &RankingTask, options: RewardOptions) -> RewardBreakdown {
    let omega = overlap_f1(raw, task);
    let r_g = omega - 1.0;
    let r_a = if options.strict_ra_zero && r_g < 0.0 {
        0.0
    } else {
        reciprocal_rank(&normalize_ranking(raw, task), &task.positives).unwrap_or(0.0)
    };
    RewardBreakdown::new(r_a, r_g)
}

/// 1 when the excluded candidate is a negative, else 0.
pub fn exclusion_reward(excluded: &str, task: &RankingTask) -> Result<f64, RewardError> {
    if task.candidate(excluded).is_none() {
        return Err(RewardError::UnknownCandidate(excluded.to_string()));
    }
    Ok(if task.is_positive(excluded) { 0.0 } else { 1.0 })
}

fn check_weights(w: RoutingWeights) -> Result<(), RewardError> {
    let ok = w.effectiveness >= 0.0 && w.cost >= 0.0 && w.effectiveness + w.cost > 0.0;
    if ok {
        Ok(())
    } else {
        Err(RewardError::BadWeights(w.effectiveness, w.cost))
    }
}

/// `alpha * effectiveness - beta * normalized_cost`, with the cost already
/// min-max normalized over the task's candidates.
pub fn routing_utility(effectiveness: f64, normalized_cost: f64, weights: RoutingWeights) -> Result<f64, RewardError> {
    check_weights(weights)?;
    Ok(weights.effectiveness * effectiveness - weights.cost * normalized_cost)
}

/// Min-max normalization to [0, 1]; a constant column maps to zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// Utilities for a whole candidate set, normalizing raw costs first.
pub fn routing_utilities(effectiveness: &[f64], costs: &[f64], weights: RoutingWeights) -> Result<Vec<f64>, RewardError> {
    if effectiveness.len() != costs.len() {
        return Err(RewardError::LengthMismatch(effectiveness.len(), costs.len()));
    }
    min_max_normalize(costs)
        .into_iter()
        .zip(effectiveness)
        .map(|(c, e)| routing_utility(*e, c, weights))
        .collect()
}

/// Index of the highest utility; ties go to the lowest index.
pub fn routing_argmax(utilities: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, u) in utilities.iter().enumerate() {
        if best.is_none_or(|b| *u > utilities[b]) {
            best = Some(i);
        }
    }
    best
}
