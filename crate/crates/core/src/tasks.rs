//! Task sources: seeded synthetic generators, routing-table labeling, and
//! the JSON-lines task file format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{routing_argmax, routing_utilities};
use crate::types::{validate_task, Candidate, Query, RankingTask, RoutingWeights, ScenarioKind, ScenarioSpec, TaskError};

#[derive(Debug, Error)]
pub enum TasksError {
    #[error(transparent)]
    BadScenario(TaskError),
    #[error("routing table shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {cause}")]
    Validation { line: usize, cause: TaskError },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn bad(msg: impl Into<String>) -> TasksError {
    TasksError::BadScenario(TaskError::BadScenario(msg.into()))
}

/// Candidate id for position `i` (1-based) in a task of this kind.
pub fn candidate_id(kind: ScenarioKind, i: usize) -> String {
    match kind {
        ScenarioKind::Recommendation => format!("item {i}"),
        ScenarioKind::Routing => format!("model-{i}"),
        ScenarioKind::Passage => format!("passage {i}"),
        ScenarioKind::Synthetic => format!("c{i}"),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn perturbed(base: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    base.iter()
        .map(|x| {
            let e: f64 = StandardNormal.sample(rng);
            x + noise * e
        })
        .collect()
}

/// Planted-signal tasks. Each task draws a latent vector `z ~ N(0, I)`;
/// the query features and every positive's features are `z` plus
/// independent `N(0, noise^2)` perturbations, and negatives are drawn
/// from `N(0, I)`. Candidates are shuffled before ids are assigned and
/// all texts are label-free, so only the features carry the signal.
pub fn gen_synthetic(
    scenario: &ScenarioSpec,
    count: usize,
    feature_dim: usize,
    noise: f64,
) -> Result<Vec<RankingTask>, TasksError> {
    scenario.validate().map_err(TasksError::BadScenario)?;
    if count == 0 || feature_dim == 0 {
        return Err(bad("count and feature_dim must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(bad("noise must be a non-negative finite number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let (n, p) = (scenario.candidate_size, scenario.positive_count);
    let mut tasks = Vec::with_capacity(count);
    for t in 0..count {
        let latent = gaussian(&mut rng, feature_dim);
        let query = perturbed(&latent, noise, &mut rng);
        let mut drawn: Vec<(bool, Vec<f64>)> = (0..p).map(|_| (true, perturbed(&latent, noise, &mut rng))).collect();
        drawn.extend((p..n).map(|_| (false, gaussian(&mut rng, feature_dim))));
        drawn.shuffle(&mut rng);
        let mut candidates = Vec::with_capacity(n);
        let mut positives = std::collections::BTreeSet::new();
        for (i, (is_pos, features)) in drawn.into_iter().enumerate() {
            let id = candidate_id(scenario.kind, i + 1);
            if is_pos {
                positives.insert(id.clone());
            }
            candidates.push(Candidate::new(id.clone(), id).with_features(features));
        }
        tasks.push(RankingTask {
            id: format!("{}-{t}", scenario.kind),
            query: Query {
                text: format!("q{t}"),
                features: Some(query),
            },
            candidates,
            positives,
            scenario: scenario.clone(),
        });
    }
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingEntry {
    pub model: String,
    #[serde(default)]
    pub description: String,
    /// Task success score in `[0, 1]`.
    pub effectiveness: f64,
    /// Token cost, any non-negative unit.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingQuery {
    #[serde(default)]
    pub id: String,
    pub query_text: String,
    pub entries: Vec<RoutingEntry>,
}

/// Labels each query's single positive as the utility argmax under
/// `weights`. Candidate ids are model names and candidate text is the
/// description. With `with_features`, each candidate also carries
/// `[effectiveness, min-max normalized cost]`.
pub fn build_routing_tasks(
    queries: &[RoutingQuery],
    weights: RoutingWeights,
    with_features: bool,
    seed: u64,
) -> Result<Vec<RankingTask>, TasksError> {
    queries
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            if q.entries.len() < 2 {
                return Err(TasksError::ShapeMismatch(format!("query {qi}: need at least 2 models")));
            }
            if let Some(e) = q
                .entries
                .iter()
                .find(|e| !(0.0..=1.0).contains(&e.effectiveness) || !(e.cost >= 0.0 && e.cost.is_finite()))
            {
                return Err(TasksError::ShapeMismatch(format!(
                    "query {qi}: model {:?} has effectiveness {} and cost {}",
                    e.model, e.effectiveness, e.cost
                )));
            }
            let eff: Vec<f64> = q.entries.iter().map(|e| e.effectiveness).collect();
            let cost: Vec<f64> = q.entries.iter().map(|e| e.cost).collect();
            let utilities = routing_utilities(&eff, &cost, weights).map_err(|e| TasksError::ShapeMismatch(e.to_string()))?;
            let best = routing_argmax(&utilities).expect("at least two entries");
            let norm_cost = crate::rewards::min_max_normalize(&cost);
            let candidates = q
                .entries
                .iter()
                .zip(&norm_cost)
                .map(|(e, nc)| {
                    let c = Candidate::new(e.model.clone(), e.description.clone());
                    if with_features {
                        c.with_features(vec![e.effectiveness, *nc])
                    } else {
                        c
                    }
                })
                .collect();
            let mut scenario = ScenarioSpec::routing(weights, seed);
            scenario.candidate_size = q.entries.len();
            let task = RankingTask {
                id: if q.id.is_empty() { format!("routing-{qi}") } else { q.id.clone() },
                query: Query::text(q.query_text.clone()),
                candidates,
                positives: [q.entries[best].model.clone()].into(),
                scenario,
            };
            validate_task(task).map_err(|cause| TasksError::Validation { line: qi + 1, cause })
        })
        .collect()
}

const MODEL_POOL: [(&str, f64, f64); 10] = [
    ("GPT-4", 2.2, 30.0),
    ("Claude-v2", 1.6, 8.0),
    ("Claude-instant", 0.7, 0.8),
    ("GPT-3.5-turbo", 0.9, 1.0),
    ("Mixtral-8x7b", 0.8, 0.6),
    ("Llama-2-70b", 0.5, 0.9),
    ("Yi-34b", 0.4, 0.8),
    ("Mistral-7b", -0.2, 0.2),
    ("Llama-2-13b", -0.3, 0.3),
    ("Code-Llama-34b", 0.1, 0.8),
];

/// Synthetic routing tables for the ten-model pool: effectiveness is
/// `sigmoid(skill - difficulty + noise)` and cost is price times a
/// per-query token count.
pub fn gen_routing_tables(count: usize, seed: u64) -> Vec<RoutingQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|t| {
            let difficulty: f64 = StandardNormal.sample(&mut rng);
            let tokens: f64 = rng.random_range(200.0..2000.0);
            let entries = MODEL_POOL
                .iter()
                .map(|(name, skill, price)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    let z = skill - difficulty + 0.5 * e;
                    RoutingEntry {
                        model: (*name).to_string(),
                        description: format!("{name} language model"),
                        effectiveness: 1.0 / (1.0 + (-z).exp()),
                        cost: price * tokens / 1e6,
                    }
                })
                .collect();
            RoutingQuery {
                id: format!("routing-{t}"),
                query_text: format!("routing query {t}"),
                entries,
            }
        })
        .collect()
}

/// Reads one task per non-blank line. Tasks without an id are named
/// `task-<line>`.
pub fn load_tasks(path: &Path) -> Result<Vec<RankingTask>, TasksError> {
    read_tasks(BufReader::new(File::open(path)?))
}

pub fn read_tasks(reader: impl BufRead) -> Result<Vec<RankingTask>, TasksError> {
    let mut tasks = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut task: RankingTask = serde_json::from_str(&line).map_err(|e| TasksError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if task.id.is_empty() {
            task.id = format!("task-{line_no}");
        }
        tasks.push(validate_task(task).map_err(|cause| TasksError::Validation { line: line_no, cause })?);
    }
    Ok(tasks)
}

pub fn save_tasks(path: &Path, tasks: &[RankingTask]) -> Result<(), TasksError> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in tasks {
        let line = serde_json::to_string(t).map_err(|e| TasksError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn deterministic_given_seed() {
        let s = ScenarioSpec::synthetic(10, 1, 5);
        assert_eq!(gen_synthetic(&s, 20, 8, 0.1).unwrap(), gen_synthetic(&s, 20, 8, 0.1).unwrap());
        let other = ScenarioSpec::synthetic(10, 1, 6);
        assert_ne!(gen_synthetic(&s, 3, 8, 0.1).unwrap(), gen_synthetic(&other, 3, 8, 0.1).unwrap());
    }

    #[test]
    fn recommendation_shape() {
        for t in gen_synthetic(&ScenarioSpec::recommendation(1), 50, 4, 0.2).unwrap() {
            assert_eq!(t.len(), 20);
            assert_eq!(t.positives.len(), 1);
            assert_eq!(t.negative_count(), 19);
            t.validate().unwrap();
        }
    }

    #[test]
    fn noiseless_positive_is_nearest() {
        let tasks = gen_synthetic(&ScenarioSpec::passage(9, 3), 1000, 4, 0.0).unwrap();
        for t in &tasks {
            let q = t.query.features.as_ref().unwrap();
            let best = t
                .candidates
                .iter()
                .max_by(|a, b| cosine(q, a.features.as_ref().unwrap()).total_cmp(&cosine(q, b.features.as_ref().unwrap())))
                .unwrap();
            assert!(t.is_positive(&best.id));
        }
    }

    #[test]
    fn positions_are_shuffled() {
        let tasks = gen_synthetic(&ScenarioSpec::synthetic(10, 1, 8), 400, 2, 0.1).unwrap();
        let mut hits = [0usize; 10];
        for t in &tasks {
            let pos = t.candidates.iter().position(|c| t.is_positive(&c.id)).unwrap();
            hits[pos] += 1;
        }
        assert!(hits.iter().all(|&h| h > 15), "{hits:?}");
    }

    #[test]
    fn bad_arguments() {
        let s = ScenarioSpec::synthetic(10, 1, 0);
        assert!(matches!(gen_synthetic(&s, 0, 8, 0.1), Err(TasksError::BadScenario(_))));
        assert!(matches!(gen_synthetic(&s, 1, 8, -1.0), Err(TasksError::BadScenario(_))));
        let broken = ScenarioSpec::synthetic(3, 3, 0);
        assert!(matches!(gen_synthetic(&broken, 1, 8, 0.1), Err(TasksError::BadScenario(_))));
    }

    fn entry(model: &str, eff: f64, cost: f64) -> RoutingEntry {
        RoutingEntry {
            model: model.into(),
            description: String::new(),
            effectiveness: eff,
            cost,
        }
    }

    #[test]
    fn routing_labels() {
        let q = RoutingQuery {
            id: String::new(),
            query_text: "sum the sales".into(),
            entries: vec![entry("a", 0.9, 10.0), entry("b", 0.8, 1.0), entry("c", 0.3, 0.0)],
        };
        let perf = build_routing_tasks(std::slice::from_ref(&q), RoutingWeights::PERFORMANCE_FIRST, false, 0).unwrap();
        assert_eq!(perf[0].positives.iter().next().unwrap(), "a");
        assert!(perf[0].candidates[0].features.is_none());
        // BALANCE: a = 0.45 - 0.5, b = 0.4 - 0.05, c = 0.15
        let bal = build_routing_tasks(std::slice::from_ref(&q), RoutingWeights::BALANCE, true, 0).unwrap();
        assert_eq!(bal[0].positives.iter().next().unwrap(), "b");
        assert_eq!(bal[0].candidates[1].features.as_deref(), Some(&[0.8, 0.1][..]));
        assert_eq!(bal[0].id, "routing-0");
    }

    #[test]
    fn worked_pair_labels_second_model() {
        let q = RoutingQuery {
            id: String::new(),
            query_text: "q".into(),
            entries: vec![entry("m1", 0.9, 0.9), entry("m2", 0.7, 0.1)],
        };
        let t = build_routing_tasks(&[q], RoutingWeights::BALANCE, false, 0).unwrap();
        assert_eq!(t[0].positives.iter().next().unwrap(), "m2");
    }

    #[test]
    fn routing_shape_checks() {
        let q = RoutingQuery {
            id: "x".into(),
            query_text: "q".into(),
            entries: vec![entry("a", 1.5, 1.0), entry("b", 0.5, 1.0)],
        };
        assert!(matches!(
            build_routing_tasks(&[q], RoutingWeights::BALANCE, false, 0),
            Err(TasksError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn generated_routing_tables_have_ten_models() {
        let tables = gen_routing_tables(30, 2);
        let tasks = build_routing_tasks(&tables, RoutingWeights::BALANCE, true, 2).unwrap();
        for t in &tasks {
            assert_eq!(t.len(), 10);
            assert_eq!(t.negative_count(), 9);
        }
    }

    #[test]
    fn file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tasks.jsonl");
        let tasks = gen_synthetic(&ScenarioSpec::passage(5, 1), 4, 3, 0.1).unwrap();
        save_tasks(&path, &tasks).unwrap();
        assert_eq!(load_tasks(&path).unwrap(), tasks);

        let good = r#"{"query_text":"q","candidates":[{"id":"a","text":"x"},{"id":"b","text":"y"}],"positives":["a"],"scenario":{"kind":"synthetic","candidate_size":2,"positive_count":1}}"#;
        let loaded = read_tasks(format!("\n{good}\n").as_bytes()).unwrap();
        assert_eq!(loaded[0].id, "task-2");

        let missing = good.replace(r#""positives":["a"],"#, "");
        let err = read_tasks(format!("{good}\n{missing}").as_bytes()).unwrap_err();
        assert!(matches!(err, TasksError::Validation { line: 2, cause: TaskError::EmptyPositives }));

        let dup = good.replace(r#""id":"b""#, r#""id":"a""#);
        assert!(matches!(
            read_tasks(dup.as_bytes()).unwrap_err(),
            TasksError::Validation { line: 1, cause: TaskError::DuplicateCandidateId(_) }
        ));

        assert!(matches!(read_tasks("{not json".as_bytes()).unwrap_err(), TasksError::Parse { line: 1, .. }));
    }
}
