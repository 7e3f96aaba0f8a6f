//! Shared builders and independent reference implementations for the
//! integration tests. The references are written from the definitions,
//! not from the library code, so agreement is evidence.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ranker::policies::remote::{CompletionClient, CompletionRequest, RemoteError};
use ranker::types::{Candidate, Query, RankingTask, ScenarioSpec};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// A synthetic task with candidates `c1..=cn`, the listed 1-based positives
/// and optional random features.
pub fn task(n: usize, positives: &[usize], feature_dim: Option<usize>, rng: &mut ChaCha8Rng) -> RankingTask {
    let feats = |rng: &mut ChaCha8Rng, d: usize| -> Vec<f64> { (0..d).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let candidates = (1..=n)
        .map(|i| {
            let c = Candidate::new(format!("c{i}"), format!("candidate {i}"));
            match feature_dim {
                Some(d) => c.with_features(feats(rng, d)),
                None => c,
            }
        })
        .collect();
    RankingTask {
        id: format!("t{n}"),
        query: Query {
            text: "query".into(),
            features: feature_dim.map(|d| feats(rng, d)),
        },
        candidates,
        positives: positives.iter().map(|i| format!("c{i}")).collect(),
        scenario: ScenarioSpec::synthetic(n, positives.len(), 0),
    }
}

/// Reference reciprocal rank: scan the best-first order for the first positive.
pub fn brute_rr(order: &[String], positives: &BTreeSet<String>) -> f64 {
    let pos = order.iter().position(|id| positives.contains(id)).expect("a positive is ranked");
    1.0 / (pos + 1) as f64
}

/// Reference nDCG@k: DCG of the relevance vector over the ideal DCG of
/// the same vector sorted descending.
pub fn brute_ndcg(order: &[String], positives: &BTreeSet<String>, k: usize) -> f64 {
    let rel: Vec<f64> = order.iter().map(|id| if positives.contains(id) { 1.0 } else { 0.0 }).collect();
    let dcg = |r: &[f64]| -> f64 { r.iter().take(k).enumerate().map(|(i, g)| g / (i as f64 + 2.0).log2()).sum() };
    let mut ideal = rel.clone();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    dcg(&rel) / dcg(&ideal)
}

pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// Reference GAE: `A_t = sum_l (gamma lam)^l delta_{t+l}` summed directly,
/// with `V_n = 0` past the end.
pub fn brute_gae(rewards: &[f64], values: &[f64], gamma: f64, lam: f64) -> Vec<f64> {
    let n = rewards.len();
    let v = |t: usize| if t < n { values[t] } else { 0.0 };
    (0..n)
        .map(|t| {
            (t..n)
                .map(|j| (gamma * lam).powi((j - t) as i32) * (rewards[j] + gamma * v(j + 1) - values[j]))
                .sum()
        })
        .collect()
}

/// A completion endpoint that answers with a random `c<i>` id, which is
/// sometimes outside the pool and so exercises the parse fallback.
pub struct ScriptedClient {
    rng: Mutex<ChaCha8Rng>,
    max_id: usize,
}

impl ScriptedClient {
    pub fn new(seed: u64, max_id: usize) -> Self {
        Self {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            max_id,
        }
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, _request: &CompletionRequest) -> Result<String, RemoteError> {
        let i = self.rng.lock().unwrap().random_range(1..=self.max_id);
        Ok(format!("<think>c{i} looks least relevant.</think>\n<answer>c{i}</answer>"))
    }
}
