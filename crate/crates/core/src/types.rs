//! Domain types shared by every module: candidates, tasks, rankings,
//! episode traces and training configuration.
//!
//! Rank convention: ranks are 1-based and rank 1 is the best candidate.
//! In an iterative-exclusion episode the candidate excluded at step `k`
//! (1-based) receives rank `n - k + 1`, so the first exclusion gets rank `n`
//! (worst) and the candidate left standing gets rank 1.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type CandidateId = String;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            features: None,
        }
    }

    pub fn with_features(mut self, features: Vec<f64>) -> Self {
        self.features = Some(features);
        self
    }
}

/// The query side of a task. For recommendation this is the serialized
/// interaction history; for routing and passage ranking the user query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Query {
    #[serde(rename = "query_text")]
    pub text: String,
    #[serde(
        rename = "query_features",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub features: Option<Vec<f64>>,
}

impl Query {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Recommendation,
    Routing,
    Passage,
    Synthetic,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioKind::Recommendation => "recommendation",
            ScenarioKind::Routing => "routing",
            ScenarioKind::Passage => "passage",
            ScenarioKind::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

/// Weights of the routing utility `alpha * effectiveness - beta * cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingWeights {
    pub effectiveness: f64,
    pub cost: f64,
}

impl RoutingWeights {
    pub const PERFORMANCE_FIRST: RoutingWeights = RoutingWeights {
        effectiveness: 1.0,
        cost: 0.0,
    };
    pub const BALANCE: RoutingWeights = RoutingWeights {
        effectiveness: 0.5,
        cost: 0.5,
    };
    pub const COST_FIRST: RoutingWeights = RoutingWeights {
        effectiveness: 0.2,
        cost: 0.8,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub candidate_size: usize,
    pub positive_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing_weights: Option<RoutingWeights>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    /// 20 candidates, 1 positive.
    pub fn recommendation(seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Recommendation,
            candidate_size: 20,
            positive_count: 1,
            routing_weights: None,
            seed,
        }
    }

    /// 10 candidate models, 1 positive.
    pub fn routing(weights: RoutingWeights, seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Routing,
            candidate_size: 10,
            positive_count: 1,
            routing_weights: Some(weights),
            seed,
        }
    }

    /// Passage ranking with 5, 7 or 9 passages and a single relevant one.
    pub fn passage(candidate_size: usize, seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Passage,
            candidate_size,
            positive_count: 1,
            routing_weights: None,
            seed,
        }
    }

    pub fn synthetic(candidate_size: usize, positive_count: usize, seed: u64) -> Self {
        Self {
            kind: ScenarioKind::Synthetic,
            candidate_size,
            positive_count,
            routing_weights: None,
            seed,
        }
    }

    /// Resolves a named shape: `recommendation`, `routing`,
    /// `routing-performance`, `routing-balance`, `routing-cost`, `passage5`,
    /// `passage7`, `passage9`, or `synthetic<n>` (e.g. `synthetic10`).
    pub fn from_shape(shape: &str, seed: u64) -> Option<Self> {
        let spec = match shape {
            "recommendation" | "rec" => Self::recommendation(seed),
            "routing" | "routing-balance" => Self::routing(RoutingWeights::BALANCE, seed),
            "routing-performance" => Self::routing(RoutingWeights::PERFORMANCE_FIRST, seed),
            "routing-cost" => Self::routing(RoutingWeights::COST_FIRST, seed),
            "passage5" => Self::passage(5, seed),
            "passage7" => Self::passage(7, seed),
            "passage9" => Self::passage(9, seed),
            other => {
                let n: usize = other.strip_prefix("synthetic")?.parse().ok()?;
                Self::synthetic(n, 1, seed)
            }
        };
        Some(spec)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.candidate_size == 0 || self.positive_count == 0 {
            return Err(TaskError::BadScenario(
                "candidate_size and positive_count must be positive".into(),
            ));
        }
        if self.positive_count >= self.candidate_size {
            return Err(TaskError::BadScenario(format!(
                "positive_count {} must be below candidate_size {}",
                self.positive_count, self.candidate_size
            )));
        }
        match (self.kind, self.routing_weights) {
            (ScenarioKind::Routing, None) => Err(TaskError::BadScenario(
                "routing scenario requires routing_weights".into(),
            )),
            (ScenarioKind::Routing, Some(_)) | (_, None) => Ok(()),
            (kind, Some(_)) => Err(TaskError::BadScenario(format!(
                "routing_weights given for a {kind} scenario"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTask {
    #[serde(default)]
    pub id: String,
    #[serde(flatten)]
    pub query: Query,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub positives: BTreeSet<CandidateId>,
    pub scenario: ScenarioSpec,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("candidates: duplicate candidate id {0:?}")]
    DuplicateCandidateId(String),
    #[error("candidates: empty candidate id at position {0}")]
    EmptyCandidateId(usize),
    #[error("positives: empty positive set")]
    EmptyPositives,
    #[error("positives: id {0:?} is not a candidate")]
    PositiveNotInCandidates(String),
    #[error("positives: every candidate is positive, no negatives remain")]
    NoNegatives,
    #[error("positives: {found} positives but scenario.positive_count = {expected}")]
    PositiveCountMismatch { expected: usize, found: usize },
    #[error("candidates: {found} candidates but scenario.candidate_size = {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("candidates: feature dimension mismatch ({0})")]
    FeatureDimensionMismatch(String),
    #[error("scenario: {0}")]
    BadScenario(String),
}

impl RankingTask {
    pub fn candidate_ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn is_positive(&self, id: &str) -> bool {
        self.positives.contains(id)
    }

    pub fn negative_count(&self) -> usize {
        self.candidates
            .iter()
            .filter(|c| !self.positives.contains(&c.id))
            .count()
    }

    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    /// Feature dimension shared by all candidates, if they carry features.
    pub fn feature_dim(&self) -> Option<usize> {
        self.candidates
            .first()
            .and_then(|c| c.features.as_ref())
            .map(Vec::len)
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        self.scenario.validate()?;
        let mut seen = HashSet::with_capacity(self.candidates.len());
        for (i, c) in self.candidates.iter().enumerate() {
            if c.id.is_empty() {
                return Err(TaskError::EmptyCandidateId(i));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(TaskError::DuplicateCandidateId(c.id.clone()));
            }
        }
        if self.candidates.len() != self.scenario.candidate_size {
            return Err(TaskError::SizeMismatch {
                expected: self.scenario.candidate_size,
                found: self.candidates.len(),
            });
        }
        if self.positives.is_empty() {
            return Err(TaskError::EmptyPositives);
        }
        if let Some(p) = self.positives.iter().find(|p| !seen.contains(p.as_str())) {
            return Err(TaskError::PositiveNotInCandidates(p.clone()));
        }
        if self.positives.len() == self.candidates.len() {
            return Err(TaskError::NoNegatives);
        }
        if self.positives.len() != self.scenario.positive_count {
            return Err(TaskError::PositiveCountMismatch {
                expected: self.scenario.positive_count,
                found: self.positives.len(),
            });
        }
        self.validate_features()
    }

    fn validate_features(&self) -> Result<(), TaskError> {
        let dims: Vec<Option<usize>> = self
            .candidates
            .iter()
            .map(|c| c.features.as_ref().map(Vec::len))
            .collect();
        let first = dims[0];
        if dims.iter().any(|d| *d != first) {
            return Err(TaskError::FeatureDimensionMismatch(
                "candidates must all carry features of one dimension, or none".into(),
            ));
        }
        if let (Some(q), Some(c)) = (self.query.features.as_ref(), first) {
            if q.len() != c {
                return Err(TaskError::FeatureDimensionMismatch(format!(
                    "query has {} features, candidates have {c}",
                    q.len()
                )));
            }
        }
        let finite = |v: &Vec<f64>| v.iter().all(|x| x.is_finite());
        if self
            .candidates
            .iter()
            .filter_map(|c| c.features.as_ref())
            .chain(self.query.features.as_ref())
            .any(|v| !finite(v))
        {
            return Err(TaskError::FeatureDimensionMismatch(
                "non-finite feature value".into(),
            ));
        }
        Ok(())
    }
}

/// Returns the task unchanged iff every task invariant holds.
pub fn validate_task(task: RankingTask) -> Result<RankingTask, TaskError> {
    task.validate()?;
    Ok(task)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RankingError {
    #[error("id {0:?} appears more than once")]
    Duplicate(String),
    #[error("id {0:?} is not a candidate of the task")]
    Foreign(String),
    #[error("{missing} candidate(s) missing from the ordering")]
    Incomplete { missing: usize },
}

/// A validated permutation of a task's candidates, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    order: Vec<CandidateId>,
    rank_of: BTreeMap<CandidateId, usize>,
}

impl Ranking {
    /// Builds a ranking from a best-first order, checking it is a
    /// permutation of `universe`.
    pub fn from_order<'a>(
        order: Vec<CandidateId>,
        universe: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, RankingError> {
        let universe: HashSet<&str> = universe.into_iter().collect();
        let mut rank_of = BTreeMap::new();
        for (i, id) in order.iter().enumerate() {
            if !universe.contains(id.as_str()) {
                return Err(RankingError::Foreign(id.clone()));
            }
            if rank_of.insert(id.clone(), i + 1).is_some() {
                return Err(RankingError::Duplicate(id.clone()));
            }
        }
        if rank_of.len() != universe.len() {
            return Err(RankingError::Incomplete {
                missing: universe.len() - rank_of.len(),
            });
        }
        Ok(Self { order, rank_of })
    }

    /// Builds a ranking from an exclusion sequence (first excluded = worst).
    pub fn from_exclusions<'a>(
        excluded: &[CandidateId],
        universe: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, RankingError> {
        Self::from_order(excluded.iter().rev().cloned().collect(), universe)
    }

    pub fn order(&self) -> &[CandidateId] {
        &self.order
    }

    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.rank_of.get(id).copied()
    }

    pub fn ranks(&self) -> &BTreeMap<CandidateId, usize> {
        &self.rank_of
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Candidates recovered from a one-shot ranking output before validation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawRankingOutput {
    pub matched: Vec<CandidateId>,
    pub hallucinated_count: usize,
    pub duplicates_dropped: usize,
}

impl RawRankingOutput {
    pub fn perfect(order: Vec<CandidateId>) -> Self {
        Self {
            matched: order,
            hallucinated_count: 0,
            duplicates_dropped: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub pool: Vec<CandidateId>,
    pub excluded: CandidateId,
    pub reward: f64,
    pub log_prob: f64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    /// Set when the policy's answer could not be parsed and a uniform
    /// random exclusion was substituted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub task_ref: String,
    pub steps: Vec<EpisodeStep>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace has no steps")]
    Empty,
    #[error("step {step}: pool does not follow from the previous exclusion")]
    PoolMismatch { step: usize },
    #[error("step {step}: excluded id {id:?} not in pool")]
    ExcludedNotInPool { step: usize, id: String },
    #[error("final pool must hold exactly one candidate")]
    BadTerminal,
}

impl EpisodeTrace {
    pub fn exclusion_order(&self) -> Vec<CandidateId> {
        self.steps.iter().map(|s| s.excluded.clone()).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let first = self.steps.first().ok_or(TraceError::Empty)?;
        let mut expected: Vec<&str> = first.pool.iter().map(String::as_str).collect();
        for (k, step) in self.steps.iter().enumerate() {
            let pool: Vec<&str> = step.pool.iter().map(String::as_str).collect();
            if pool != expected {
                return Err(TraceError::PoolMismatch { step: k });
            }
            let Some(pos) = pool.iter().position(|id| *id == step.excluded) else {
                return Err(TraceError::ExcludedNotInPool {
                    step: k,
                    id: step.excluded.clone(),
                });
            };
            expected.remove(pos);
        }
        if !expected.is_empty() || self.steps.last().map(|s| s.pool.len()) != Some(1) {
            return Err(TraceError::BadTerminal);
        }
        Ok(())
    }
}

/// A trace together with the query it answered, as stored on disk and fed
/// to thought-template retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub query_text: String,
    pub trace: EpisodeTrace,
}

impl TraceRecord {
    /// Step reasoning joined in exclusion order, if any step carried some.
    pub fn reasoning(&self) -> Option<String> {
        let parts: Vec<&str> = self
            .trace
            .steps
            .iter()
            .filter_map(|s| s.reasoning.as_deref())
            .filter(|r| !r.trim().is_empty())
            .collect();
        (!parts.is_empty()).then(|| parts.join("\n"))
    }
}

/// Per-output reward decomposition for one-shot ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Ranking reward: reciprocal rank of the best positive.
    pub r_a: f64,
    /// Format penalty: overlap F1 minus one.
    pub r_g: f64,
    /// Total reward, `r_a + r_g`.
    pub r_d: f64,
}

impl RewardBreakdown {
    pub fn new(r_a: f64, r_g: f64) -> Self {
        Self {
            r_a,
            r_g,
            r_d: r_a + r_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid PPO configuration: {0}")]
pub struct ConfigError(pub String);

/// PPO hyper-parameters.
///
/// Learning rates are sized for the small linear policy trained here, not
/// for a transformer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub lam: f64,
    pub kl_coeff: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub episodes_per_iteration: usize,
    pub iterations: usize,
    pub normalize_advantages: bool,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            gamma: 0.0,
            lam: 0.95,
            kl_coeff: 1e-4,
            actor_lr: 1e-2,
            critic_lr: 2e-2,
            ppo_epochs: 4,
            minibatch_size: 64,
            episodes_per_iteration: 32,
            iterations: 200,
            normalize_advantages: true,
            seed: 42,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError(msg.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return bad("gamma and lam must lie in [0, 1]");
        }
        if !(self.kl_coeff >= 0.0 && self.kl_coeff.is_finite()) {
            return bad("kl_coeff must be a non-negative finite number");
        }
        // Zero rates are accepted so a run can be checked for parameter invariance.
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0)
            || !self.actor_lr.is_finite()
            || !self.critic_lr.is_finite()
        {
            return bad("learning rates must be non-negative and finite");
        }
        if self.ppo_epochs == 0
            || self.minibatch_size == 0
            || self.episodes_per_iteration == 0
            || self.iterations == 0
        {
            return bad("epochs, minibatch size, episodes and iterations must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn task_with(n: usize, positives: &[&str]) -> RankingTask {
        RankingTask {
            id: "t".into(),
            query: Query::text("q"),
            candidates: (0..n)
                .map(|i| Candidate::new(format!("c{i}"), format!("item {i}")))
                .collect(),
            positives: positives.iter().map(|s| s.to_string()).collect(),
            scenario: ScenarioSpec::synthetic(n, positives.len().max(1), 0),
        }
    }

    #[test]
    fn valid_recommendation_task_passes() {
        let mut task = task_with(20, &["c3"]);
        task.scenario = ScenarioSpec::recommendation(1);
        assert_eq!(validate_task(task.clone()), Ok(task));
    }

    #[test]
    fn empty_positives_rejected() {
        let task = task_with(5, &[]);
        assert_eq!(task.validate(), Err(TaskError::EmptyPositives));
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut task = task_with(10, &["c1"]);
        task.candidates[8].id = "c7".into();
        assert_eq!(
            task.validate(),
            Err(TaskError::DuplicateCandidateId("c7".into()))
        );
    }

    #[test]
    fn foreign_positive_and_size_mismatch() {
        let task = task_with(4, &["zz"]);
        assert_eq!(
            task.validate(),
            Err(TaskError::PositiveNotInCandidates("zz".into()))
        );
        let mut task = task_with(4, &["c0"]);
        task.scenario.candidate_size = 5;
        assert!(matches!(
            task.validate(),
            Err(TaskError::SizeMismatch {
                expected: 5,
                found: 4
            })
        ));
    }

    #[test]
    fn ragged_features_rejected() {
        let mut task = task_with(3, &["c0"]);
        task.candidates[0].features = Some(vec![1.0, 2.0]);
        assert!(matches!(
            task.validate(),
            Err(TaskError::FeatureDimensionMismatch(_))
        ));
    }

    #[test]
    fn routing_weights_tied_to_kind() {
        let mut s = ScenarioSpec::recommendation(0);
        s.routing_weights = Some(RoutingWeights::BALANCE);
        assert!(s.validate().is_err());
        let mut r = ScenarioSpec::routing(RoutingWeights::BALANCE, 0);
        r.routing_weights = None;
        assert!(r.validate().is_err());
    }

    #[test]
    fn named_shapes() {
        let shapes = [
            ("recommendation", 20),
            ("routing", 10),
            ("passage5", 5),
            ("passage7", 7),
            ("passage9", 9),
        ];
        for (name, n) in shapes {
            let s = ScenarioSpec::from_shape(name, 0).unwrap();
            assert_eq!((s.candidate_size, s.positive_count), (n, 1), "{name}");
        }
        assert_eq!(
            ScenarioSpec::from_shape("synthetic12", 3).unwrap().candidate_size,
            12
        );
        assert!(ScenarioSpec::from_shape("bogus", 0).is_none());
    }

    #[test]
    fn ranking_from_exclusions_reverses() {
        let ex: Vec<String> = ["c3", "c1", "c2"].iter().map(|s| s.to_string()).collect();
        let r = Ranking::from_exclusions(&ex, ["c1", "c2", "c3"]).unwrap();
        assert_eq!(r.order(), &["c2", "c1", "c3"]);
        assert_eq!(r.rank_of("c3"), Some(3));
        assert_eq!(r.rank_of("c1"), Some(2));
        assert_eq!(r.rank_of("c2"), Some(1));
    }

    #[test]
    fn ranking_rejects_non_permutations() {
        let ids = ["a", "b", "c"];
        let o = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(
            Ranking::from_order(o(&["a", "a", "b"]), ids),
            Err(RankingError::Duplicate("a".into()))
        );
        assert_eq!(
            Ranking::from_order(o(&["a", "x", "b"]), ids),
            Err(RankingError::Foreign("x".into()))
        );
        assert_eq!(
            Ranking::from_order(o(&["a", "b"]), ids),
            Err(RankingError::Incomplete { missing: 1 })
        );
    }

    #[test]
    fn trace_validation() {
        let step = |pool: &[&str], ex: &str| EpisodeStep {
            pool: pool.iter().map(|s| s.to_string()).collect(),
            excluded: ex.into(),
            reward: 0.0,
            log_prob: 0.0,
            value: 0.0,
            reasoning: None,
            fallback: false,
        };
        let good = EpisodeTrace {
            task_ref: "t".into(),
            steps: vec![step(&["a", "b", "c"], "b"), step(&["a", "c"], "a"), step(&["c"], "c")],
        };
        assert_eq!(good.validate(), Ok(()));
        let bad = EpisodeTrace {
            task_ref: "t".into(),
            steps: vec![step(&["a", "b", "c"], "b"), step(&["a", "b"], "a")],
        };
        assert_eq!(bad.validate(), Err(TraceError::PoolMismatch { step: 1 }));
    }

    #[test]
    fn ppo_defaults_are_valid() {
        assert!(PpoConfig::default().validate().is_ok());
        let c = PpoConfig {
            clip_epsilon: 1.0,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn task_serde_round_trip() {
        let mut task = task_with(3, &["c1"]);
        task.query.features = Some(vec![0.5, -1.25]);
        for c in &mut task.candidates {
            c.features = Some(vec![0.1, 0.2]);
        }
        let line = serde_json::to_string(&task).unwrap();
        assert!(line.contains("\"query_text\""));
        let back: RankingTask = serde_json::from_str(&line).unwrap();
        assert_eq!(back, task);
    }
}
