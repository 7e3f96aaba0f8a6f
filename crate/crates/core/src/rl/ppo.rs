//! Clipped-surrogate objective, KL regularizer, critic loss, GAE, and the
//! analytic gradient of their sum for the linear-softmax policy.

use super::RlError;
use crate::policies::PolicyParams;
use crate::types::{CandidateId, EpisodeTrace};

/// Advantages and returns for one trace. The value after the final step
/// is taken as 0.
pub fn compute_gae(trace: &EpisodeTrace, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let rewards: Vec<f64> = trace.steps.iter().map(|s| s.reward).collect();
    let values: Vec<f64> = trace.steps.iter().map(|s| s.value).collect();
    gae(&rewards, &values, gamma, lam)
}

pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lam * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

fn check_len(a: usize, b: usize) -> Result<(), RlError> {
    if a == b {
        Ok(())
    } else {
        Err(RlError::LengthMismatch(a, b))
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Derivative of the clipped term with respect to the new log-probability.
fn clipped_term_slope(ratio: f64, advantage: f64, eps: f64) -> f64 {
    if ratio * advantage <= ratio.clamp(1.0 - eps, 1.0 + eps) * advantage {
        ratio * advantage
    } else {
        0.0
    }
}

/// Loss `-mean(min(rho A, clip(rho) A))` and the per-transition terms.
pub fn ppo_surrogate(
    new_log_probs: &[f64],
    old_log_probs: &[f64],
    advantages: &[f64],
    clip_epsilon: f64,
) -> Result<(f64, Vec<f64>), RlError> {
    check_len(new_log_probs.len(), old_log_probs.len())?;
    check_len(new_log_probs.len(), advantages.len())?;
    let terms: Vec<f64> = new_log_probs
        .iter()
        .zip(old_log_probs)
        .zip(advantages)
        .map(|((n, o), a)| clipped_term((n - o).exp(), *a, clip_epsilon))
        .collect();
    Ok((-mean(&terms), terms))
}

/// `k(rho) = rho - 1 - ln rho`, `rho = exp(ref - new)`.
fn kl_term(new: f64, reference: f64) -> f64 {
    let log_ratio = reference - new;
    log_ratio.exp() - 1.0 - log_ratio
}

pub fn kl_regularizer(new_log_probs: &[f64], ref_log_probs: &[f64]) -> Result<f64, RlError> {
    check_len(new_log_probs.len(), ref_log_probs.len())?;
    let terms: Vec<f64> = new_log_probs.iter().zip(ref_log_probs).map(|(n, r)| kl_term(*n, *r)).collect();
    Ok(mean(&terms))
}

pub fn value_loss(predictions: &[f64], returns: &[f64]) -> Result<f64, RlError> {
    check_len(predictions.len(), returns.len())?;
    let sq: Vec<f64> = predictions.iter().zip(returns).map(|(p, r)| (p - r) * (p - r)).collect();
    Ok(mean(&sq))
}

/// What was done in a state: one exclusion (index into the rows) or a
/// best-first permutation of all rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Exclude(usize),
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Pairing features of the pool, one row per candidate.
    pub rows: Vec<Vec<f64>>,
    pub action: Action,
    pub old_log_prob: f64,
    pub ref_log_prob: f64,
    /// Advantage fed to the surrogate (normalized when enabled).
    pub advantage: f64,
    pub raw_advantage: f64,
    pub return_to_go: f64,
    /// Critic input.
    pub state: Vec<f64>,
    pub pool: Vec<CandidateId>,
}

impl Transition {
    pub fn log_prob_grad(&self, params: &PolicyParams) -> (f64, Vec<f64>) {
        match &self.action {
            Action::Exclude(a) => params.exclusion_log_prob_grad(&self.rows, *a),
            Action::Permutation(p) => params.ranking_log_prob_grad(&self.rows, p),
        }
    }
}

/// A rollout batch for one iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingBatch {
    pub transitions: Vec<Transition>,
    pub iteration: usize,
}

impl TrainingBatch {
    /// Rescales advantages to zero mean and unit variance; `raw_advantage`
    /// keeps the original. A batch with no spread is only centered.
    pub fn normalize_advantages(&mut self) {
        let raw: Vec<f64> = self.transitions.iter().map(|t| t.raw_advantage).collect();
        let m = mean(&raw);
        let var = mean(&raw.iter().map(|a| (a - m) * (a - m)).collect::<Vec<_>>());
        let sd = var.sqrt();
        for t in &mut self.transitions {
            t.advantage = if sd > 1e-12 { (t.raw_advantage - m) / sd } else { t.raw_advantage - m };
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub surrogate: f64,
    pub kl: f64,
    pub value: f64,
    pub total: f64,
}

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub value_weights: Vec<f64>,
}

impl ParamGrad {
    fn zeros_like(p: &PolicyParams) -> Self {
        Self {
            weights: vec![0.0; p.weights.len()],
            bias: 0.0,
            value_weights: vec![0.0; p.value_weights.len()],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().chain(&self.value_weights).all(|g| g.is_finite())
    }
}

/// `surrogate + kl_coeff * kl + value_loss` over `batch` and its gradient.
/// The bias shifts every score equally, so it cancels in both softmaxes
/// and its gradient is 0.
pub fn loss_and_grad(
    params: &PolicyParams,
    batch: &[&Transition],
    clip_epsilon: f64,
    kl_coeff: f64,
) -> (LossBreakdown, ParamGrad) {
    let mut grad = ParamGrad::zeros_like(params);
    let mut loss = LossBreakdown::default();
    if batch.is_empty() {
        return (loss, grad);
    }
    let n = batch.len() as f64;
    for t in batch {
        let (lp, g) = t.log_prob_grad(params);
        let ratio = (lp - t.old_log_prob).exp();
        loss.surrogate -= clipped_term(ratio, t.advantage, clip_epsilon) / n;
        loss.kl += kl_term(lp, t.ref_log_prob) / n;
        let slope = -clipped_term_slope(ratio, t.advantage, clip_epsilon) + kl_coeff * (1.0 - (t.ref_log_prob - lp).exp());
        for (gw, gi) in grad.weights.iter_mut().zip(&g) {
            *gw += slope * gi / n;
        }
        let v = params.value(&t.state);
        let err = v - t.return_to_go;
        loss.value += err * err / n;
        for (gv, x) in grad.value_weights.iter_mut().zip(&t.state) {
            *gv += 2.0 * err * x / n;
        }
    }
    loss.total = loss.surrogate + kl_coeff * loss.kl + loss.value;
    (loss, grad)
}

/// Plain gradient descent: actor weights and bias with `actor_lr`, critic
/// weights with `critic_lr`.
pub fn apply_gradient(params: &mut PolicyParams, grad: &ParamGrad, actor_lr: f64, critic_lr: f64) {
    for (w, g) in params.weights.iter_mut().zip(&grad.weights) {
        *w -= actor_lr * g;
    }
    params.bias -= actor_lr * grad.bias;
    for (w, g) in params.value_weights.iter_mut().zip(&grad.value_weights) {
        *w -= critic_lr * g;
    }
}
