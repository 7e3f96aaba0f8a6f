//! Chat prompt templates for one-shot ranking and single exclusion.
//!
//! Placeholders are written `{name}`: `{history}`, `{n}`, `{candidate_items}`,
//! `{llm_descriptions}`, `{llm_candidates}`, `{query}` and
//! `{formatted_passages}`. Candidate display strings are one per line:
//! the item text for recommendation, `id: description` for routing and
//! `id: text` for passages.

use serde::{Deserialize, Serialize};

use crate::types::{Candidate, RankingTask, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankerKind {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemplateFamily {
    Recommendation,
    Routing,
    Passage,
}

impl From<ScenarioKind> for TemplateFamily {
    fn from(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Recommendation => TemplateFamily::Recommendation,
            ScenarioKind::Routing => TemplateFamily::Routing,
            ScenarioKind::Passage | ScenarioKind::Synthetic => TemplateFamily::Passage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
    /// Opening of the assistant turn the model is expected to continue.
    pub assistant_prefix: String,
}

impl RenderedPrompt {
    pub fn messages(&self, prefill: bool) -> Vec<ChatMessage> {
        let mut m = vec![
            ChatMessage::new("system", &self.system),
            ChatMessage::new("user", &self.user),
        ];
        if prefill {
            m.push(ChatMessage::new("assistant", &self.assistant_prefix));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub ranker: RankerKind,
    pub family: TemplateFamily,
    pub system: &'static str,
    pub body: &'static str,
}

const ASSISTANT_PREFIX: &str = "Let me solve this step by step.\n<think>";

const FORMAT_TAIL: &str = "Show your work in <think> </think> tags. And return the final answer in <answer> </answer> tags.";

const REC_SYSTEM: &str = "You are a helpful assistant that ranks products by how likely the user is to buy them, based on their previous purchase history.";
const ROUTING_SYSTEM: &str = "You are a helpful assistant that selects the most suitable large language model (LLM) for a given query, based on performance and token cost.";
const PASSAGE_SYSTEM: &str = "You are a helpful assistant that ranks passages by relevance to a given query.";

const ROUTING_SCENARIO: &str = "## This scenario is analyzing a set of sales data to uncover trends and insights. Please provide useful insights with reasonable depth, balancing accuracy and efficiency.";

const DIRECT_REC: &str = "I've purchased the following items in the past, in order:\n{history}\nNow there are {n} candidate items that I might purchase next:\n{candidate_items}\nPlease rank these items by measuring the possibilities that I would like to buy next most, according to my purchase history. Please think step by step.\nSplit your output with line break. You MUST rank the given candidate items. You can not generate items that are not in the given candidate list. ";
const ITER_REC: &str = "I've purchased the following items in the past, in order:\n{history}\nNow there are {n} candidate items that I might purchase next:\n{candidate_items}\nPlease select the one item that is least likely to be my next purchase, according to my purchase history. Please think step by step. You MUST choose exactly one item from the given candidate list. You can NOT generate or reference items that are not in the given candidate list. ";

const DIRECT_ROUTING: &str = "{llm_descriptions}\n{scenario} Here is a query: {query} and LLM candidates: {llm_candidates}. Please think step by step according to the description of each query and LLM, and evaluate from the perspectives of performance in answering the query and token price. Rank all LLMs from most suitable to least suitable for this query. Return the LLM names in order, one per line. Split your output with line break. You MUST rank all LLMs from the candidate list. You can not generate content that is not in the given candidate list.\n";
const ITER_ROUTING: &str = "{llm_descriptions}\n{scenario} Here is a query: {query} and LLM candidates: {llm_candidates}. Please think step by step according to the description of each query and LLM, and evaluate from the perspectives of performance in answering the query and token price, and select the least likely LLM from the LLM candidates. Only return the LLM name corresponding to the LLM. You MUST choose one LLM name from LLM candidates. You can not generate content that are not in the given LLM candidates.\n";

const DIRECT_PASSAGE: &str = "## Here is a query: {query}\n{formatted_passages}\nPlease think step by step according to the content of each passage and how well it supports or relates to the query. Rank all passages from most relevant to least relevant. Return the passage IDs in order, one per line (e.g.,\npassage 1\npassage 3\npassage 2). You MUST rank all passages from the candidate list. You can not generate content that is not in the given candidate list.\n";
const ITER_PASSAGE: &str = "## Here is a query: {query}\n{formatted_passages}\nPlease think step by step according to the content of each passage and how well it supports or relates to the query. Select the least likely passage from the candidate list. Only return the passage ID corresponding to the excluded passage (e.g., \"passage 3\"). You MUST choose one passage from the candidate list. You can not generate content that is not in the given candidate list.\n";

impl PromptTemplate {
    pub fn for_task(ranker: RankerKind, kind: ScenarioKind) -> Self {
        let family = TemplateFamily::from(kind);
        let (system, body) = match (ranker, family) {
            (RankerKind::Direct, TemplateFamily::Recommendation) => (REC_SYSTEM, DIRECT_REC),
            (RankerKind::Iterative, TemplateFamily::Recommendation) => (REC_SYSTEM, ITER_REC),
            (RankerKind::Direct, TemplateFamily::Routing) => (ROUTING_SYSTEM, DIRECT_ROUTING),
            (RankerKind::Iterative, TemplateFamily::Routing) => (ROUTING_SYSTEM, ITER_ROUTING),
            (RankerKind::Direct, TemplateFamily::Passage) => (PASSAGE_SYSTEM, DIRECT_PASSAGE),
            (RankerKind::Iterative, TemplateFamily::Passage) => (PASSAGE_SYSTEM, ITER_PASSAGE),
        };
        Self {
            ranker,
            family,
            system,
            body,
        }
    }

    /// The line that represents `c` in a rendered prompt.
    pub fn display_string(&self, c: &Candidate) -> String {
        match self.family {
            TemplateFamily::Recommendation => c.text.clone(),
            TemplateFamily::Routing | TemplateFamily::Passage => format!("{}: {}", c.id, c.text),
        }
    }

    /// Renders the prompt for `pool`, optionally preceded by a preamble
    /// (retrieved thought templates).
    pub fn render(&self, task: &RankingTask, pool: &[&Candidate], preamble: Option<&str>) -> RenderedPrompt {
        let lines: Vec<String> = pool.iter().map(|c| self.display_string(c)).collect();
        let block = lines.join("\n");
        let ids: Vec<&str> = pool.iter().map(|c| c.id.as_str()).collect();
        let n = pool.len().to_string();
        let llm_candidates = ids.join(", ");
        let values: [(&str, &str); 8] = [
            ("scenario", ROUTING_SCENARIO),
            ("history", &task.query.text),
            ("query", &task.query.text),
            ("n", &n),
            ("llm_candidates", &llm_candidates),
            ("candidate_items", &block),
            ("llm_descriptions", &block),
            ("formatted_passages", &block),
        ];
        let mut user = fill_placeholders(self.body, &values);
        user.push_str(FORMAT_TAIL);
        if let Some(p) = preamble.filter(|p| !p.is_empty()) {
            user = format!("{p}\n\n{user}");
        }
        RenderedPrompt {
            system: self.system.to_string(),
            user,
            assistant_prefix: ASSISTANT_PREFIX.to_string(),
        }
    }
}

/// Single-pass substitution, so placeholder-like text inside substituted
/// values is left alone.
fn fill_placeholders(body: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(body.len() * 2);
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, v)) => {
                out.push_str(v);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
