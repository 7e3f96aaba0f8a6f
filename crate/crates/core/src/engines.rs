//! Direct (one-shot) and iterative (exclusion) decoding of a ranking task.
//!
//! An iterative episode on `n` candidates runs `n - 1` policy exclusions and
//! then a terminal step that excludes the last remaining candidate. The
//! candidate excluded at step `k` (1-based) receives rank `n - k + 1`, so
//! the best-first order is the exclusion sequence reversed.

use std::collections::BTreeSet;

use rand::RngCore;
use thiserror::Error;

use crate::policies::{Mode, Policy, PolicyError};
use crate::rewards::{exclusion_reward, normalize_ranking, ranking_reward, RewardError, RewardOptions};
use crate::types::{
    Candidate, CandidateId, EpisodeStep, EpisodeTrace, Ranking, RankingError, RankingTask, RawRankingOutput,
    RewardBreakdown,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("policy excluded {0:?}, which is not in the current pool")]
    ForeignExclusion(CandidateId),
    #[error("task has no candidates")]
    EmptyTask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectOutcome {
    pub ranking: Ranking,
    pub raw: RawRankingOutput,
    pub reward: RewardBreakdown,
    pub log_prob: f64,
    pub value: Option<f64>,
    pub raw_text: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IterativeOptions {
    /// Ask the policy for the final exclusion too, instead of taking the
    /// single remaining candidate without a call.
    pub query_last_step: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeOutcome {
    pub ranking: Ranking,
    pub trace: EpisodeTrace,
    pub policy_calls: usize,
}

/// One `decide_ranking` call, scored with the composite reward. The
/// returned ranking is the normalized one.
pub fn rank_direct(
    policy: &dyn Policy,
    task: &RankingTask,
    mode: Mode,
    rng: &mut dyn RngCore,
    options: RewardOptions,
) -> Result<DirectOutcome, EngineError> {
    let decision = policy.decide_ranking(task, mode, rng)?;
    let ranking = normalize_ranking(&decision.raw, task);
    let reward = ranking_reward(&decision.raw, task, options);
    let value = decision.value_estimate.or_else(|| {
        let pool: Vec<&Candidate> = task.candidates.iter().collect();
        policy.state_value(task, &pool)
    });
    Ok(DirectOutcome {
        ranking,
        raw: decision.raw,
        reward,
        log_prob: decision.log_prob,
        value,
        raw_text: decision.raw_text,
    })
}

pub fn rank_iterative(
    policy: &dyn Policy,
    task: &RankingTask,
    mode: Mode,
    rng: &mut dyn RngCore,
    options: IterativeOptions,
) -> Result<IterativeOutcome, EngineError> {
    if task.candidates.is_empty() {
        return Err(EngineError::EmptyTask);
    }
    let mut pool: Vec<&Candidate> = task.candidates.iter().collect();
    let mut steps = Vec::with_capacity(pool.len());
    let mut policy_calls = 0;
    while !pool.is_empty() {
        let pool_ids: Vec<CandidateId> = pool.iter().map(|c| c.id.clone()).collect();
        let step = if pool.len() > 1 || options.query_last_step {
            policy_calls += 1;
            let d = policy.decide_exclusion(task, &pool, mode, rng)?;
            let value = d.value_estimate.or_else(|| policy.state_value(task, &pool));
            EpisodeStep {
                pool: pool_ids,
                reward: 0.0,
                log_prob: d.log_prob,
                value: value.unwrap_or(0.0),
                reasoning: d.reasoning,
                fallback: d.fallback,
                excluded: d.excluded,
            }
        } else {
            EpisodeStep {
                pool: pool_ids,
                excluded: pool[0].id.clone(),
                reward: 0.0,
                log_prob: 0.0,
                value: policy.state_value(task, &pool).unwrap_or(0.0),
                reasoning: None,
                fallback: false,
            }
        };
        let Some(pos) = pool.iter().position(|c| c.id == step.excluded) else {
            return Err(EngineError::ForeignExclusion(step.excluded));
        };
        pool.remove(pos);
        let reward = exclusion_reward(&step.excluded, task)?;
        steps.push(EpisodeStep { reward, ..step });
    }
    let trace = EpisodeTrace {
        task_ref: task.id.clone(),
        steps,
    };
    let exclusions = trace.exclusion_order();
    let ranking = Ranking::from_exclusions(&exclusions, task.candidate_ids())?;
    Ok(IterativeOutcome {
        ranking,
        trace,
        policy_calls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnSummary {
    pub total_reward: f64,
    /// Best rank held by any positive; `None` when no positive was excluded.
    pub positive_rank: Option<usize>,
}

pub fn episode_return_summary(trace: &EpisodeTrace, positives: &BTreeSet<CandidateId>) -> ReturnSummary {
    let n = trace.steps.len();
    let positive_rank = trace
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| positives.contains(&s.excluded))
        .map(|(k, _)| n - k)
        .min();
    ReturnSummary {
        total_reward: trace.total_reward(),
        positive_rank,
    }
}
