//! Decision policies for both ranking regimes.
//!
//! A policy answers two questions: which pool member to exclude next
//! (iterative regime) and how to order a whole task in one shot (direct
//! regime). Stochastic policies report the natural-log probability of the
//! action they took so the trainer can form importance ratios.

mod linear;
pub mod prompt;
pub mod remote;
pub mod thought;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use thiserror::Error;

use crate::parse::token_f1;
use crate::types::{Candidate, CandidateId, Query, RankingTask, RawRankingOutput};

pub use linear::{log_softmax, state_features, LinearSoftmaxPolicy, PolicyParams};
pub use remote::{RemoteConfig, RemotePolicy};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("empty candidate pool")]
    EmptyPool,
    #[error("feature dimension mismatch: {0}")]
    FeatureDimensionMismatch(String),
    #[error("remote completion failed: {0}")]
    RemoteFailure(String),
}

/// Greedy decoding picks the mode of the policy's distribution; sampling
/// draws from it. Only trainable policies distinguish the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionDecision {
    pub excluded: CandidateId,
    pub log_prob: f64,
    pub raw_text: Option<String>,
    pub reasoning: Option<String>,
    pub value_estimate: Option<f64>,
    pub fallback: bool,
}

impl ExclusionDecision {
    fn plain(excluded: &str, log_prob: f64) -> Self {
        Self {
            excluded: excluded.to_string(),
            log_prob,
            raw_text: None,
            reasoning: None,
            value_estimate: None,
            fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingDecision {
    pub raw: RawRankingOutput,
    pub log_prob: f64,
    pub raw_text: Option<String>,
    pub value_estimate: Option<f64>,
}

impl RankingDecision {
    fn plain(order: Vec<CandidateId>, log_prob: f64) -> Self {
        Self {
            raw: RawRankingOutput::perfect(order),
            log_prob,
            raw_text: None,
            value_estimate: None,
        }
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    /// Chooses one member of `pool` to exclude.
    fn decide_exclusion(
        &self,
        task: &RankingTask,
        pool: &[&Candidate],
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError>;

    /// Emits a full ranking of `task` in one shot.
    fn decide_ranking(
        &self,
        task: &RankingTask,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<RankingDecision, PolicyError>;

    /// Value estimate of a pool state, for policies carrying a critic.
    fn state_value(&self, _task: &RankingTask, _pool: &[&Candidate]) -> Option<f64> {
        None
    }
}

/// Pairing features `phi(q, c)`: candidate features, their elementwise
/// product with the query features, the token-F1 similarity of the texts,
/// and a constant 1. Parts whose inputs are absent are left out, so the
/// dimension is `2d + 2`, `d + 2` or `2` depending on the task source.
pub fn pairing_features(query: &Query, candidate: &Candidate) -> Result<Vec<f64>, PolicyError> {
    let mut phi = Vec::new();
    if let Some(cf) = &candidate.features {
        phi.extend_from_slice(cf);
        if let Some(qf) = &query.features {
            if qf.len() != cf.len() {
                return Err(PolicyError::FeatureDimensionMismatch(format!(
                    "query has {} features, candidate {:?} has {}",
                    qf.len(),
                    candidate.id,
                    cf.len()
                )));
            }
            phi.extend(qf.iter().zip(cf).map(|(q, c)| q * c));
        }
    }
    phi.push(token_f1(&query.text, &candidate.text));
    phi.push(1.0);
    Ok(phi)
}

fn uniform_pick<'a>(ids: &[&'a str], rng: &mut dyn RngCore) -> (&'a str, f64) {
    let i = rng.random_range(0..ids.len());
    (ids[i], -(ids.len() as f64).ln())
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Excludes a random negative while one remains, so positives end on top.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

/// Excludes positives first: the worst possible ranker.
#[derive(Debug, Clone, Copy, Default)]
pub struct AntiOraclePolicy;

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

/// Similarity baseline: cosine of query and candidate features when both
/// are present, token-F1 of the texts otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestPolicy;

fn partitioned<'a>(task: &RankingTask, pool: &[&'a Candidate], positive: bool) -> Vec<&'a str> {
    pool.iter()
        .filter(|c| task.is_positive(&c.id) == positive)
        .map(|c| c.id.as_str())
        .collect()
}

fn exclude_preferring(
    task: &RankingTask,
    pool: &[&Candidate],
    positives_first: bool,
    rng: &mut dyn RngCore,
) -> Result<ExclusionDecision, PolicyError> {
    if pool.is_empty() {
        return Err(PolicyError::EmptyPool);
    }
    let preferred = partitioned(task, pool, positives_first);
    let group = if preferred.is_empty() {
        partitioned(task, pool, !positives_first)
    } else {
        preferred
    };
    let (id, lp) = uniform_pick(&group, rng);
    Ok(ExclusionDecision::plain(id, lp))
}

fn ordered_by_label(task: &RankingTask, positives_first: bool) -> Vec<CandidateId> {
    let (mut first, second): (Vec<_>, Vec<_>) = task
        .candidates
        .iter()
        .map(|c| c.id.clone())
        .partition(|id| task.is_positive(id) == positives_first);
    first.extend(second);
    first
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn decide_exclusion(
        &self,
        task: &RankingTask,
        pool: &[&Candidate],
        _mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError> {
        exclude_preferring(task, pool, false, rng)
    }

    fn decide_ranking(&self, task: &RankingTask, _mode: Mode, _rng: &mut dyn RngCore) -> Result<RankingDecision, PolicyError> {
        Ok(RankingDecision::plain(ordered_by_label(task, true), 0.0))
    }
}

impl Policy for AntiOraclePolicy {
    fn name(&self) -> String {
        "anti-oracle".into()
    }

    fn decide_exclusion(
        &self,
        task: &RankingTask,
        pool: &[&Candidate],
        _mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError> {
        exclude_preferring(task, pool, true, rng)
    }

    fn decide_ranking(&self, task: &RankingTask, _mode: Mode, _rng: &mut dyn RngCore) -> Result<RankingDecision, PolicyError> {
        Ok(RankingDecision::plain(ordered_by_label(task, false), 0.0))
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn decide_exclusion(
        &self,
        _task: &RankingTask,
        pool: &[&Candidate],
        _mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError> {
        if pool.is_empty() {
            return Err(PolicyError::EmptyPool);
        }
        let ids: Vec<&str> = pool.iter().map(|c| c.id.as_str()).collect();
        let (id, lp) = uniform_pick(&ids, rng);
        Ok(ExclusionDecision::plain(id, lp))
    }

    fn decide_ranking(&self, task: &RankingTask, _mode: Mode, rng: &mut dyn RngCore) -> Result<RankingDecision, PolicyError> {
        let mut order: Vec<CandidateId> = task.candidates.iter().map(|c| c.id.clone()).collect();
        order.shuffle(rng);
        Ok(RankingDecision::plain(order, -ln_factorial(task.len())))
    }
}

/// Similarity used by [`NearestPolicy`].
pub fn nearest_similarity(query: &Query, candidate: &Candidate) -> f64 {
    match (&query.features, &candidate.features) {
        (Some(q), Some(c)) if q.len() == c.len() => {
            let dot: f64 = q.iter().zip(c).map(|(a, b)| a * b).sum();
            let nq = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nq == 0.0 || nc == 0.0 {
                0.0
            } else {
                dot / (nq * nc)
            }
        }
        _ => token_f1(&query.text, &candidate.text),
    }
}

impl Policy for NearestPolicy {
    fn name(&self) -> String {
        "nearest".into()
    }

    fn decide_exclusion(
        &self,
        task: &RankingTask,
        pool: &[&Candidate],
        _mode: Mode,
        _rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError> {
        let mut worst: Option<(&Candidate, f64)> = None;
        for c in pool {
            let s = nearest_similarity(&task.query, c);
            if worst.is_none_or(|(_, w)| s < w) {
                worst = Some((c, s));
            }
        }
        let (c, _) = worst.ok_or(PolicyError::EmptyPool)?;
        Ok(ExclusionDecision::plain(&c.id, 0.0))
    }

    fn decide_ranking(&self, task: &RankingTask, _mode: Mode, _rng: &mut dyn RngCore) -> Result<RankingDecision, PolicyError> {
        let mut scored: Vec<(f64, &Candidate)> = task
            .candidates
            .iter()
            .map(|c| (nearest_similarity(&task.query, c), c))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let order = scored.into_iter().map(|(_, c)| c.id.clone()).collect();
        Ok(RankingDecision::plain(order, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ScenarioSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(n: usize, positives: &[usize]) -> RankingTask {
        RankingTask {
            id: "t".into(),
            query: Query::text("red apple pie"),
            candidates: (0..n).map(|i| Candidate::new(format!("c{i}"), format!("item {i}"))).collect(),
            positives: positives.iter().map(|i| format!("c{i}")).collect(),
            scenario: ScenarioSpec::synthetic(n, positives.len(), 0),
        }
    }

    #[test]
    fn oracle_excludes_negative_with_uniform_log_prob() {
        let t = task(3, &[0]);
        let pool: Vec<&Candidate> = t.candidates.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let d = OraclePolicy.decide_exclusion(&t, &pool, Mode::Greedy, &mut rng).unwrap();
            assert_ne!(d.excluded, "c0");
            assert!((d.log_prob - 0.5f64.ln()).abs() < 1e-15);
        }
        let last = [&t.candidates[0]];
        let d = OraclePolicy.decide_exclusion(&t, &last, Mode::Greedy, &mut rng).unwrap();
        assert_eq!(d.excluded, "c0");
        assert_eq!(d.log_prob, 0.0);
    }

    #[test]
    fn anti_oracle_excludes_positive_first() {
        let t = task(5, &[3]);
        let pool: Vec<&Candidate> = t.candidates.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = AntiOraclePolicy.decide_exclusion(&t, &pool, Mode::Greedy, &mut rng).unwrap();
        assert_eq!(d.excluded, "c3");
    }

    #[test]
    fn empty_pool_is_an_error() {
        let t = task(3, &[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [&OraclePolicy as &dyn Policy, &AntiOraclePolicy, &RandomPolicy, &NearestPolicy] {
            assert!(matches!(
                p.decide_exclusion(&t, &[], Mode::Sample, &mut rng),
                Err(PolicyError::EmptyPool)
            ));
        }
    }

    #[test]
    fn random_exclusion_is_uniform() {
        // Chi-square goodness of fit over 10k draws, 3 degrees of freedom.
        let t = task(4, &[0]);
        let pool: Vec<&Candidate> = t.candidates.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let d = RandomPolicy.decide_exclusion(&t, &pool, Mode::Sample, &mut rng).unwrap();
            assert!((d.log_prob.exp() - 0.25).abs() < 1e-15);
            counts[d.excluded[1..].parse::<usize>().unwrap()] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 3 dof.
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn oracle_ranking_puts_positives_first() {
        let t = task(5, &[2, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = OraclePolicy.decide_ranking(&t, Mode::Greedy, &mut rng).unwrap();
        assert_eq!(d.raw.matched, ["c2", "c4", "c0", "c1", "c3"]);
        assert_eq!(crate::metrics::overlap_f1(&d.raw, &t), 1.0);
    }

    #[test]
    fn nearest_excludes_least_similar() {
        let mut t = task(3, &[0]);
        t.candidates[0].text = "apple pie".into();
        t.candidates[1].text = "red apple".into();
        t.candidates[2].text = "motor oil".into();
        let pool: Vec<&Candidate> = t.candidates.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = NearestPolicy.decide_exclusion(&t, &pool, Mode::Greedy, &mut rng).unwrap();
        assert_eq!(d.excluded, "c2");
        let r = NearestPolicy.decide_ranking(&t, Mode::Greedy, &mut rng).unwrap();
        assert_eq!(r.raw.matched, ["c0", "c1", "c2"]);
    }

    #[test]
    fn nearest_prefers_features_over_text() {
        let mut t = task(2, &[1]);
        t.query.features = Some(vec![1.0, 0.0]);
        t.candidates[0] = Candidate::new("c0", "red apple pie").with_features(vec![0.0, 1.0]);
        t.candidates[1] = Candidate::new("c1", "motor oil").with_features(vec![2.0, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = NearestPolicy.decide_ranking(&t, Mode::Greedy, &mut rng).unwrap();
        assert_eq!(r.raw.matched, ["c1", "c0"]);
    }

    #[test]
    fn pairing_feature_shapes() {
        let q = Query {
            text: "same words".into(),
            features: Some(vec![0.0; 3]),
        };
        let c = Candidate::new("a", "same words").with_features(vec![0.0; 3]);
        let phi = pairing_features(&q, &c).unwrap();
        assert_eq!(phi.len(), 8);
        assert_eq!(&phi[..6], &[0.0; 6]);
        assert_eq!(phi[6], 1.0);
        assert_eq!(phi[7], 1.0);

        let text_only = pairing_features(&Query::text("x"), &Candidate::new("a", "y")).unwrap();
        assert_eq!(text_only, vec![0.0, 1.0]);

        let bad = Candidate::new("a", "y").with_features(vec![1.0; 2]);
        assert!(matches!(pairing_features(&q, &bad), Err(PolicyError::FeatureDimensionMismatch(_))));
    }
}
