use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ppo::{apply_gradient, compute_gae, loss_and_grad, Action, TrainingBatch, Transition};
use super::RlError;
use crate::engines::{rank_direct, rank_iterative, IterativeOptions};
use crate::metrics::reciprocal_rank;
use crate::policies::{state_features, LinearSoftmaxPolicy, Mode, PolicyParams};
use crate::rewards::RewardOptions;
use crate::types::{PpoConfig, RankingTask};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Iterative,
    Direct,
}

/// One row of the training curve. `mean_reward` is the mean discounted
/// episode return under the sampling policy (`r_d` for direct episodes),
/// `kl` is measured against the reference after the iteration's updates
/// and `loss` averages the final epoch's minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_mrr: f64,
    pub kl: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub regime: Regime,
    pub iteration: usize,
    pub params: PolicyParams,
    pub reference: PolicyParams,
    pub config: PpoConfig,
    pub rng: ChaCha8Rng,
    pub curve: Vec<CurvePoint>,
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), RlError> {
    let text = serde_json::to_string_pretty(ck).map_err(|e| RlError::Checkpoint(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, RlError> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| RlError::Checkpoint(e.to_string()))?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(CHECKPOINT_VERSION as u64) {
        return Err(RlError::Checkpoint(format!(
            "unsupported checkpoint version {version:?}, expected {CHECKPOINT_VERSION}"
        )));
    }
    serde_json::from_value(value).map_err(|e| RlError::Checkpoint(e.to_string()))
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), RlError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "iteration,mean_reward,mean_mrr,kl,loss")?;
    for p in curve {
        writeln!(f, "{},{},{},{},{}", p.iteration, p.mean_reward, p.mean_mrr, p.kl, p.loss)?;
    }
    Ok(())
}

struct Episode {
    transitions: Vec<Transition>,
    discounted_return: f64,
    reciprocal_rank: f64,
}

/// PPO state carried across iterations. The KL reference is the policy as
/// it was when training started.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: PolicyParams,
    reference: PolicyParams,
    config: PpoConfig,
    regime: Regime,
    rng: ChaCha8Rng,
    iteration: usize,
    curve: Vec<CurvePoint>,
}

impl Trainer {
    pub fn new(params: PolicyParams, config: PpoConfig, regime: Regime) -> Result<Self, RlError> {
        config.validate()?;
        Ok(Self {
            reference: params.clone(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            params,
            config,
            regime,
            iteration: 0,
            curve: Vec::new(),
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, RlError> {
        ck.config.validate()?;
        Ok(Self {
            params: ck.params,
            reference: ck.reference,
            config: ck.config,
            regime: ck.regime,
            rng: ck.rng,
            iteration: ck.iteration,
            curve: ck.curve,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            regime: self.regime,
            iteration: self.iteration,
            params: self.params.clone(),
            reference: self.reference.clone(),
            config: self.config.clone(),
            rng: self.rng.clone(),
            curve: self.curve.clone(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            params: self.params,
            curve: self.curve,
        }
    }

    /// Runs iterations until the configured count is reached.
    pub fn run(&mut self, tasks: &[RankingTask]) -> Result<(), RlError> {
        while !self.is_done() {
            self.step(tasks)?;
        }
        Ok(())
    }

    /// One rollout-and-update iteration.
    pub fn step(&mut self, tasks: &[RankingTask]) -> Result<CurvePoint, RlError> {
        if tasks.is_empty() {
            return Err(RlError::NoTasks);
        }
        // Task picks and episode seeds come from the trainer stream, so the
        // rollouts below are reproducible however rayon schedules them.
        let plan: Vec<(usize, u64)> = (0..self.config.episodes_per_iteration)
            .map(|_| (self.rng.random_range(0..tasks.len()), self.rng.next_u64()))
            .collect();
        let snapshot = LinearSoftmaxPolicy::new(self.params.clone());
        let episodes: Vec<Episode> = plan
            .par_iter()
            .map(|&(ti, seed)| self.rollout(&snapshot, &tasks[ti], seed))
            .collect::<Result<_, _>>()?;

        let n_eps = episodes.len().max(1) as f64;
        let mean_reward = episodes.iter().map(|e| e.discounted_return).sum::<f64>() / n_eps;
        let mean_mrr = episodes.iter().map(|e| e.reciprocal_rank).sum::<f64>() / n_eps;
        let mut batch = TrainingBatch {
            transitions: episodes.into_iter().flat_map(|e| e.transitions).collect(),
            iteration: self.iteration,
        };
        if self.config.normalize_advantages {
            batch.normalize_advantages();
        }

        let mut order: Vec<usize> = (0..batch.transitions.len()).collect();
        let mut last_epoch_loss = 0.0;
        for _ in 0..self.config.ppo_epochs {
            order.shuffle(&mut self.rng);
            let mut losses = Vec::new();
            for chunk in order.chunks(self.config.minibatch_size) {
                let mb: Vec<&Transition> = chunk.iter().map(|&i| &batch.transitions[i]).collect();
                let (loss, grad) = loss_and_grad(&self.params, &mb, self.config.clip_epsilon, self.config.kl_coeff);
                if !loss.total.is_finite() || !grad.is_finite() {
                    return Err(RlError::NonFiniteLoss {
                        iteration: self.iteration,
                        detail: format!(
                            "surrogate {}, kl {}, value {}, params finite: {}",
                            loss.surrogate,
                            loss.kl,
                            loss.value,
                            self.params.is_finite()
                        ),
                    });
                }
                apply_gradient(&mut self.params, &grad, self.config.actor_lr, self.config.critic_lr);
                losses.push(loss.total);
            }
            last_epoch_loss = losses.iter().sum::<f64>() / losses.len().max(1) as f64;
        }

        let all: Vec<&Transition> = batch.transitions.iter().collect();
        let (after, _) = loss_and_grad(&self.params, &all, self.config.clip_epsilon, self.config.kl_coeff);
        let point = CurvePoint {
            iteration: self.iteration,
            mean_reward,
            mean_mrr,
            kl: after.kl,
            loss: last_epoch_loss,
        };
        log::debug!(
            "iteration {}: reward {:.4} mrr {:.4} kl {:.3e} loss {:.4}",
            point.iteration,
            point.mean_reward,
            point.mean_mrr,
            point.kl,
            point.loss
        );
        self.curve.push(point);
        self.iteration += 1;
        Ok(point)
    }

    fn rollout(&self, policy: &LinearSoftmaxPolicy, task: &RankingTask, seed: u64) -> Result<Episode, RlError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<_> = task.candidates.iter().collect();
        let rows = policy.feature_rows(task, &all)?;
        let index: HashMap<&str, usize> = task.candidates.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
        match self.regime {
            Regime::Iterative => {
                let out = rank_iterative(policy, task, Mode::Sample, &mut rng, IterativeOptions::default())?;
                let (adv, ret) = compute_gae(&out.trace, self.config.gamma, self.config.lam);
                let transitions = out
                    .trace
                    .steps
                    .iter()
                    .enumerate()
                    .map(|(k, step)| {
                        let pool_rows: Vec<Vec<f64>> = step.pool.iter().map(|id| rows[index[id.as_str()]].clone()).collect();
                        let a = step.pool.iter().position(|id| *id == step.excluded).expect("trace validated by engine");
                        let ref_lp = self.reference.exclusion_log_probs(&pool_rows)[a];
                        Transition {
                            state: state_features(&pool_rows),
                            rows: pool_rows,
                            action: Action::Exclude(a),
                            old_log_prob: step.log_prob,
                            ref_log_prob: ref_lp,
                            advantage: adv[k],
                            raw_advantage: adv[k],
                            return_to_go: ret[k],
                            pool: step.pool.clone(),
                        }
                    })
                    .collect();
                let discounted_return = out
                    .trace
                    .steps
                    .iter()
                    .rev()
                    .fold(0.0, |acc, s| s.reward + self.config.gamma * acc);
                Ok(Episode {
                    transitions,
                    discounted_return,
                    reciprocal_rank: reciprocal_rank(&out.ranking, &task.positives).unwrap_or(0.0),
                })
            }
            Regime::Direct => {
                let out = rank_direct(policy, task, Mode::Sample, &mut rng, RewardOptions::default())?;
                let perm: Vec<usize> = out.raw.matched.iter().map(|id| index[id.as_str()]).collect();
                let value = out.value.unwrap_or(0.0);
                let r = out.reward.r_d;
                let transition = Transition {
                    state: state_features(&rows),
                    ref_log_prob: self.reference.ranking_log_prob(&rows, &perm),
                    rows,
                    action: Action::Permutation(perm),
                    old_log_prob: out.log_prob,
                    advantage: r - value,
                    raw_advantage: r - value,
                    return_to_go: r,
                    pool: task.candidates.iter().map(|c| c.id.clone()).collect(),
                };
                Ok(Episode {
                    transitions: vec![transition],
                    discounted_return: r,
                    reciprocal_rank: reciprocal_rank(&out.ranking, &task.positives).unwrap_or(0.0),
                })
            }
        }
    }
}

pub fn train_iterative(params: PolicyParams, tasks: &[RankingTask], config: &PpoConfig) -> Result<TrainOutcome, RlError> {
    train(params, tasks, config, Regime::Iterative)
}

pub fn train_direct(params: PolicyParams, tasks: &[RankingTask], config: &PpoConfig) -> Result<TrainOutcome, RlError> {
    train(params, tasks, config, Regime::Direct)
}

fn train(params: PolicyParams, tasks: &[RankingTask], config: &PpoConfig, regime: Regime) -> Result<TrainOutcome, RlError> {
    if tasks.is_empty() {
        return Err(RlError::NoTasks);
    }
    let mut trainer = Trainer::new(params, config.clone(), regime)?;
    trainer.run(tasks)?;
    Ok(trainer.into_outcome())
}
