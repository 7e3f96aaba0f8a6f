use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{pairing_features, ExclusionDecision, Mode, Policy, PolicyError, RankingDecision};
use crate::types::{Candidate, RankingTask, RawRankingOutput};

/// Trainable parameters: the scoring weights of the actor and the weights
/// of the linear critic.
///
/// A candidate's relevance score is `w . phi(q, c) + b`. Direct ranking
/// sorts (or Plackett-Luce samples) by descending score; exclusion samples
/// from a softmax over negated scores, so a low-relevance candidate is the
/// likeliest to be dropped and one parameter vector serves both regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub value_weights: Vec<f64>,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Critic input for a pool: mean pairing features plus `1 / |pool|`.
pub fn state_features(rows: &[Vec<f64>]) -> Vec<f64> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim + 1];
    for row in rows {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    let n = rows.len().max(1) as f64;
    for o in &mut out[..dim] {
        *o /= n;
    }
    out[dim] = 1.0 / n;
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sample_index(log_probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl PolicyParams {
    pub fn zeros(feature_dim: usize) -> Self {
        Self {
            weights: vec![0.0; feature_dim],
            bias: 0.0,
            value_weights: vec![0.0; feature_dim + 1],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite()
            && self.weights.iter().all(|w| w.is_finite())
            && self.value_weights.iter().all(|w| w.is_finite())
    }

    pub fn scores(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|phi| dot(&self.weights, phi) + self.bias).collect()
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        dot(&self.value_weights, state)
    }

    pub fn exclusion_log_probs(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let neg: Vec<f64> = self.scores(rows).iter().map(|s| -s).collect();
        log_softmax(&neg)
    }

    /// Log-probability of excluding `action` and its gradient with respect
    /// to the score weights. The bias cancels inside the softmax.
    pub fn exclusion_log_prob_grad(&self, rows: &[Vec<f64>], action: usize) -> (f64, Vec<f64>) {
        let lp = self.exclusion_log_probs(rows);
        let mut grad: Vec<f64> = rows[action].iter().map(|x| -x).collect();
        for (row, l) in rows.iter().zip(&lp) {
            let p = l.exp();
            for (g, x) in grad.iter_mut().zip(row) {
                *g += p * x;
            }
        }
        (lp[action], grad)
    }

    /// Plackett-Luce log-probability of a best-first permutation of `rows`.
    pub fn ranking_log_prob(&self, rows: &[Vec<f64>], perm: &[usize]) -> f64 {
        self.ranking_log_prob_grad(rows, perm).0
    }

    pub fn ranking_log_prob_grad(&self, rows: &[Vec<f64>], perm: &[usize]) -> (f64, Vec<f64>) {
        let scores = self.scores(rows);
        let mut total = 0.0;
        let mut grad = vec![0.0; self.weights.len()];
        for j in 0..perm.len().saturating_sub(1) {
            let rest = &perm[j..];
            let logits: Vec<f64> = rest.iter().map(|&i| scores[i]).collect();
            let lp = log_softmax(&logits);
            total += lp[0];
            for (g, x) in grad.iter_mut().zip(&rows[perm[j]]) {
                *g += x;
            }
            for (&i, l) in rest.iter().zip(&lp) {
                let p = l.exp();
                for (g, x) in grad.iter_mut().zip(&rows[i]) {
                    *g -= p * x;
                }
            }
        }
        (total, grad)
    }

    /// Best-first permutation: greedy sorts by descending score (stable),
    /// sampling draws Plackett-Luce.
    pub fn rank_rows(&self, rows: &[Vec<f64>], mode: Mode, rng: &mut dyn RngCore) -> Vec<usize> {
        let scores = self.scores(rows);
        match mode {
            Mode::Greedy => {
                let mut idx: Vec<usize> = (0..rows.len()).collect();
                idx.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
                idx
            }
            Mode::Sample => {
                let mut rest: Vec<usize> = (0..rows.len()).collect();
                let mut perm = Vec::with_capacity(rows.len());
                while !rest.is_empty() {
                    let logits: Vec<f64> = rest.iter().map(|&i| scores[i]).collect();
                    let pick = sample_index(&log_softmax(&logits), rng);
                    perm.push(rest.remove(pick));
                }
                perm
            }
        }
    }
}

/// Linear-softmax policy over candidates' pairing features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxPolicy {
    pub params: PolicyParams,
}

impl LinearSoftmaxPolicy {
    pub fn new(params: PolicyParams) -> Self {
        Self { params }
    }

    pub fn feature_rows(&self, task: &RankingTask, pool: &[&Candidate]) -> Result<Vec<Vec<f64>>, PolicyError> {
        let rows = pool
            .iter()
            .map(|c| pairing_features(&task.query, c))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(r) = rows.iter().find(|r| r.len() != self.params.feature_dim()) {
            return Err(PolicyError::FeatureDimensionMismatch(format!(
                "policy expects {} pairing features, task yields {}",
                self.params.feature_dim(),
                r.len()
            )));
        }
        Ok(rows)
    }
}

impl Policy for LinearSoftmaxPolicy {
    fn name(&self) -> String {
        "linear".into()
    }

    fn decide_exclusion(
        &self,
        task: &RankingTask,
        pool: &[&Candidate],
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ExclusionDecision, PolicyError> {
        if pool.is_empty() {
            return Err(PolicyError::EmptyPool);
        }
        let rows = self.feature_rows(task, pool)?;
        let lp = self.params.exclusion_log_probs(&rows);
        let pick = match mode {
            Mode::Greedy => argmax(&lp),
            Mode::Sample => sample_index(&lp, rng),
        };
        Ok(ExclusionDecision {
            excluded: pool[pick].id.clone(),
            log_prob: lp[pick],
            raw_text: None,
            reasoning: None,
            value_estimate: Some(self.params.value(&state_features(&rows))),
            fallback: false,
        })
    }

    fn decide_ranking(&self, task: &RankingTask, mode: Mode, rng: &mut dyn RngCore) -> Result<RankingDecision, PolicyError> {
        let pool: Vec<&Candidate> = task.candidates.iter().collect();
        let rows = self.feature_rows(task, &pool)?;
        let perm = self.params.rank_rows(&rows, mode, rng);
        let log_prob = self.params.ranking_log_prob(&rows, &perm);
        Ok(RankingDecision {
            raw: RawRankingOutput::perfect(perm.iter().map(|&i| pool[i].id.clone()).collect()),
            log_prob,
            raw_text: None,
            value_estimate: Some(self.params.value(&state_features(&rows))),
        })
    }

    fn state_value(&self, task: &RankingTask, pool: &[&Candidate]) -> Option<f64> {
        let rows = self.feature_rows(task, pool).ok()?;
        Some(self.params.value(&state_features(&rows)))
    }
}
