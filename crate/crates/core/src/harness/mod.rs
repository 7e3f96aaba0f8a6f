//! Experiment orchestration: task sources, policy construction, batch
//! evaluation, side-by-side comparison, and report files.

pub mod config;
mod report;
pub mod traces;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engines::{rank_direct, rank_iterative, IterativeOptions};
use crate::metrics::{compensated_mean, ndcg_at_k, reciprocal_rank, MetricReport};
use crate::parse::MatchConfig;
use crate::policies::remote::{CompletionClient, HttpCompletionClient, RecordingClient, RemoteError, ReplayClient, RetryConfig};
use crate::policies::thought::TraceStore;
use crate::policies::{
    pairing_features, AntiOraclePolicy, LinearSoftmaxPolicy, Mode, NearestPolicy, OraclePolicy, Policy, PolicyError,
    PolicyParams, RandomPolicy, RemoteConfig, RemotePolicy,
};
use crate::rewards::RewardOptions;
use crate::rl::{read_checkpoint, RlError, CHECKPOINT_VERSION};
use crate::tasks::{build_routing_tasks, gen_routing_tables, gen_synthetic, load_tasks, TasksError};
use crate::types::{CandidateId, EpisodeStep, RankingTask, RewardBreakdown, ScenarioKind, ScenarioSpec, TraceRecord};

pub use config::{load_config, EngineSection, EvalSection, PolicySection, RunConfig, TaskSection};
pub use report::{render_table, write_reports};
pub use traces::{export_traces, import_traces, TRACE_SCHEMA, TRACE_VERSION};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("task source is empty")]
    NoTasks,
    #[error("comparison needs at least 2 configurations, got {0}")]
    TooFewConfigs(usize),
    #[error("nDCG cutoff must be positive")]
    BadK,
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("trace file schema mismatch: found {found}, expected {TRACE_SCHEMA} v{TRACE_VERSION}")]
    SchemaVersionMismatch { found: String },
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error(transparent)]
    Tasks(#[from] TasksError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Direct,
    #[default]
    Iterative,
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EngineKind::Direct => "direct",
            EngineKind::Iterative => "iterative",
        })
    }
}

impl FromStr for EngineKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(EngineKind::Direct),
            "iterative" => Ok(EngineKind::Iterative),
            other => Err(HarnessError::Config(format!("unknown engine {other:?}"))),
        }
    }
}

/// Loads `source` when it names an existing file, and otherwise generates
/// tasks for the named shape (see [`ScenarioSpec::from_shape`]). Routing
/// shapes are labeled from synthetic effectiveness/cost tables.
pub fn resolve_tasks(section: &TaskSection, seed: u64) -> Result<Vec<RankingTask>, HarnessError> {
    let path = Path::new(&section.source);
    if path.is_file() {
        return Ok(load_tasks(path)?);
    }
    let spec = ScenarioSpec::from_shape(&section.source, seed)
        .ok_or_else(|| HarnessError::Config(format!("{:?} is neither a task file nor a known shape", section.source)))?;
    let tasks = match (spec.kind, spec.routing_weights) {
        (ScenarioKind::Routing, Some(w)) => build_routing_tasks(&gen_routing_tables(section.count, seed), w, true, seed)?,
        _ => gen_synthetic(&spec, section.count, section.feature_dim, section.noise)?,
    };
    Ok(tasks)
}

/// Reads policy parameters from a checkpoint or from a bare parameter file.
pub fn load_params(path: &Path) -> Result<PolicyParams, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    if value.get("version").is_some() {
        return Ok(read_checkpoint(path)?.params);
    }
    serde_json::from_value(value).map_err(|e| {
        HarnessError::Config(format!(
            "{}: neither parameters nor a v{CHECKPOINT_VERSION} checkpoint: {e}",
            path.display()
        ))
    })
}

/// Pairing-feature dimension of a task set (taken from its first candidate).
pub fn infer_feature_dim(tasks: &[RankingTask]) -> Result<usize, HarnessError> {
    let t = tasks.first().ok_or(HarnessError::NoTasks)?;
    let c = t.candidates.first().ok_or(HarnessError::NoTasks)?;
    Ok(pairing_features(&t.query, c)?.len())
}

fn remote_client(section: &PolicySection) -> Result<Box<dyn CompletionClient>, HarnessError> {
    let inner: Box<dyn CompletionClient> = match &section.replay {
        Some(path) => Box::new(ReplayClient::from_file(path)?),
        None => {
            let retry = RetryConfig {
                max_retries: section.max_retries,
                ..RetryConfig::default()
            };
            Box::new(HttpCompletionClient::from_env(section.api_base.clone(), retry)?)
        }
    };
    Ok(match &section.record {
        Some(path) => Box::new(RecordingClient::new(inner, path)?),
        None => inner,
    })
}

/// Builds a policy from its spec string: `oracle`, `anti-oracle`,
/// `random`, `nearest`, `linear` (zero parameters sized for `tasks`),
/// `linear:<file>` or `remote:<model>`.
pub fn build_policy(spec: &str, section: &PolicySection, tasks: &[RankingTask]) -> Result<Box<dyn Policy>, HarnessError> {
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    let policy: Box<dyn Policy> = match (head, arg) {
        ("oracle", None) => Box::new(OraclePolicy),
        ("anti-oracle", None) => Box::new(AntiOraclePolicy),
        ("random", None) => Box::new(RandomPolicy),
        ("nearest", None) => Box::new(NearestPolicy),
        ("linear", None) => Box::new(LinearSoftmaxPolicy::new(PolicyParams::zeros(infer_feature_dim(tasks)?))),
        ("linear", Some(path)) => Box::new(LinearSoftmaxPolicy::new(load_params(Path::new(path))?)),
        ("remote", Some(model)) if !model.is_empty() => {
            let config = RemoteConfig {
                model: model.to_string(),
                temperature: section.temperature,
                max_tokens: section.max_tokens,
                prefill: section.prefill,
                matching: MatchConfig {
                    threshold: section.match_threshold,
                },
                cot_top_k: section.cot_top_k,
            };
            let mut policy = RemotePolicy::new(remote_client(section)?, config);
            if let Some(path) = &section.thought_traces {
                policy = policy.with_thoughts(TraceStore::from_records(&import_traces(path)?));
            }
            Box::new(policy)
        }
        _ => return Err(HarnessError::UnknownPolicy(spec.to_string())),
    };
    Ok(policy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// nDCG cutoffs; a cutoff above a task's size is clamped to it.
    pub ks: Vec<usize>,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub jobs: usize,
    pub iterative: IterativeOptions,
    pub reward: RewardOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            ks: vec![1, 5, 10, 20],
            seed: 42,
            jobs: 0,
            iterative: IterativeOptions::default(),
            reward: RewardOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskResult {
    pub index: usize,
    pub task_id: String,
    /// Best-first order.
    pub ranking: Vec<CandidateId>,
    pub reciprocal_rank: f64,
    pub ndcg: BTreeMap<usize, f64>,
    pub policy_calls: usize,
    /// Composite reward, for direct runs.
    pub reward: Option<RewardBreakdown>,
    /// Exclusion trace, for iterative runs.
    pub trace: Option<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFailure {
    pub index: usize,
    pub task_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub engine: EngineKind,
    pub policy: String,
    /// Aggregated over the tasks that did not fail.
    pub report: MetricReport,
    pub results: Vec<TaskResult>,
    pub failures: Vec<TaskFailure>,
    pub policy_calls: usize,
    pub wall_clock: Duration,
}

impl EvalResult {
    pub fn traces(&self) -> Vec<TraceRecord> {
        self.results.iter().filter_map(|r| r.trace.clone()).collect()
    }
}

fn eval_task(
    engine: EngineKind,
    policy: &dyn Policy,
    task: &RankingTask,
    index: usize,
    opts: &EvalOptions,
) -> Result<TaskResult, String> {
    task.validate().map_err(|e| format!("invalid task: {e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(index as u64);
    let (ranking, policy_calls, reward, trace) = match engine {
        EngineKind::Direct => {
            let out = rank_direct(policy, task, Mode::Greedy, &mut rng, opts.reward).map_err(|e| e.to_string())?;
            (out.ranking, 1, Some(out.reward), None)
        }
        EngineKind::Iterative => {
            let out = rank_iterative(policy, task, Mode::Greedy, &mut rng, opts.iterative).map_err(|e| e.to_string())?;
            let record = TraceRecord {
                query_text: task.query.text.clone(),
                trace: out.trace,
            };
            (out.ranking, out.policy_calls, None, Some(record))
        }
    };
    let rr = reciprocal_rank(&ranking, &task.positives).map_err(|e| e.to_string())?;
    let mut ndcg = BTreeMap::new();
    for &k in &opts.ks {
        let v = ndcg_at_k(&ranking, &task.positives, k.min(task.len())).map_err(|e| e.to_string())?;
        ndcg.insert(k, v);
    }
    Ok(TaskResult {
        index,
        task_id: task.id.clone(),
        ranking: ranking.order().to_vec(),
        reciprocal_rank: rr,
        ndcg,
        policy_calls,
        reward,
        trace,
    })
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))
}

/// Runs `engine` with `policy` over every task in greedy mode. Task `i`
/// draws from stream `i` of a generator seeded with `opts.seed`, so the
/// outcome does not depend on `jobs`. Failed tasks are listed, never
/// dropped silently, and excluded from the aggregate.
pub fn run_eval(
    engine: EngineKind,
    policy: &dyn Policy,
    tasks: &[RankingTask],
    opts: &EvalOptions,
) -> Result<EvalResult, HarnessError> {
    if tasks.is_empty() {
        return Err(HarnessError::NoTasks);
    }
    if opts.ks.contains(&0) {
        return Err(HarnessError::BadK);
    }
    let start = Instant::now();
    let outcomes: Vec<Result<TaskResult, String>> = thread_pool(opts.jobs)?.install(|| {
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| eval_task(engine, policy, t, i, opts))
            .collect()
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => results.push(r),
            Err(error) => {
                log::warn!("task {} ({}) failed: {error}", i, tasks[i].id);
                failures.push(TaskFailure {
                    index: i,
                    task_id: tasks[i].id.clone(),
                    error,
                });
            }
        }
    }
    let n = results.len();
    let mean = |f: &dyn Fn(&TaskResult) -> f64| compensated_mean(results.iter().map(f)).unwrap_or(f64::NAN);
    let report = MetricReport {
        mrr: mean(&|r| r.reciprocal_rank),
        ndcg_at: opts.ks.iter().map(|&k| (k, mean(&|r| r.ndcg[&k]))).collect(),
        n_tasks: n,
    };
    Ok(EvalResult {
        engine,
        policy: policy.name(),
        report,
        policy_calls: results.iter().map(|r| r.policy_calls).sum(),
        results,
        failures,
        wall_clock: start.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub engine: EngineKind,
    pub policy: String,
    pub report: MetricReport,
    pub failures: Vec<TaskFailure>,
    pub policy_calls: usize,
    pub calls_per_task: f64,
    pub wall_clock: Duration,
    /// `(mrr - mrr_first) / mrr_first` against the first row.
    pub relative_improvement: f64,
}

impl CompareRow {
    pub fn from_eval(r: &EvalResult, baseline_mrr: f64) -> Self {
        let attempted = r.report.n_tasks.max(1) as f64;
        Self {
            engine: r.engine,
            policy: r.policy.clone(),
            report: r.report.clone(),
            failures: r.failures.clone(),
            policy_calls: r.policy_calls,
            calls_per_task: r.policy_calls as f64 / attempted,
            wall_clock: r.wall_clock,
            relative_improvement: (r.report.mrr - baseline_mrr) / baseline_mrr,
        }
    }
}

pub fn run_compare(
    configs: &[(EngineKind, &dyn Policy)],
    tasks: &[RankingTask],
    opts: &EvalOptions,
) -> Result<Vec<CompareRow>, HarnessError> {
    if configs.len() < 2 {
        return Err(HarnessError::TooFewConfigs(configs.len()));
    }
    let evals = configs
        .iter()
        .map(|(engine, policy)| run_eval(*engine, *policy, tasks, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let base = evals[0].report.mrr;
    Ok(evals.iter().map(|e| CompareRow::from_eval(e, base)).collect())
}

/// Step-by-step account of an exclusion episode.
pub fn narrate(trace: &TraceRecord) -> String {
    let n = trace.trace.steps.len();
    let mut out = String::new();
    for (k, EpisodeStep { pool, excluded, reward, reasoning, fallback, .. }) in trace.trace.steps.iter().enumerate() {
        out.push_str(&format!(
            "step {}: pool of {} -> exclude {excluded:?} (rank {}, reward {reward}){}\n",
            k + 1,
            pool.len(),
            n - k,
            if *fallback { " [random fallback]" } else { "" }
        ));
        if let Some(r) = reasoning {
            for line in r.lines() {
                out.push_str(&format!("    | {line}\n"));
            }
        }
    }
    out
}
