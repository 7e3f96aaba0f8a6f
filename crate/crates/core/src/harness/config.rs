//! Run configuration file (TOML). Every field is optional; command-line
//! flags override whatever the file sets.
//!
//! ```toml
//! seed = 42
//! jobs = 1
//! out = "runs/demo"
//!
//! [ppo]
//! iterations = 200
//! episodes_per_iteration = 32
//!
//! [engine]
//! kind = "iterative"        # or "direct"
//! query_last_step = false
//! strict_ra_zero = false
//!
//! [policy]
//! spec = "linear"           # oracle | anti-oracle | random | nearest | linear[:<file>] | remote:<model>
//!
//! [tasks]
//! source = "synthetic10"    # a task file path or a named shape
//! count = 200
//! feature_dim = 8
//! noise = 0.1
//!
//! [eval]
//! ks = [1, 5, 10, 20]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EngineKind, HarnessError};
use crate::types::PpoConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub ppo: PpoConfig,
    pub engine: EngineSection,
    pub policy: PolicySection,
    pub tasks: TaskSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub kind: EngineKind,
    pub query_last_step: bool,
    pub strict_ra_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub spec: String,
    /// Endpoint for remote policies; `RANKER_API_BASE` when unset.
    pub api_base: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub prefill: bool,
    pub match_threshold: f64,
    pub max_retries: u32,
    /// Thought templates injected per prompt; needs `thought_traces`.
    pub cot_top_k: usize,
    pub thought_traces: Option<PathBuf>,
    /// Serve completions from this transcript instead of the network.
    pub replay: Option<PathBuf>,
    /// Append every exchange to this transcript.
    pub record: Option<PathBuf>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            spec: "linear".into(),
            api_base: None,
            temperature: 0.9,
            max_tokens: 1024,
            prefill: false,
            match_threshold: crate::parse::DEFAULT_MATCH_THRESHOLD,
            max_retries: 3,
            cot_top_k: 0,
            thought_traces: None,
            replay: None,
            record: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub source: String,
    pub count: usize,
    pub feature_dim: usize,
    pub noise: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            source: "synthetic10".into(),
            count: 200,
            feature_dim: 8,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![1, 5, 10, 20] }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
