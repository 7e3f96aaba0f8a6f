//! Thought-template store: reasoning from past episodes, retrieved by
//! lexical similarity of the query and injected ahead of a prompt.

use crate::parse::token_f1;
use crate::types::TraceRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThoughtEntry {
    pub query: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceStore {
    entries: Vec<ThoughtEntry>,
}

impl TraceStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the records that carry reasoning text.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TraceRecord>) -> Self {
        let entries = records
            .into_iter()
            .filter_map(|r| {
                r.reasoning().map(|reasoning| ThoughtEntry {
                    query: r.query_text.clone(),
                    reasoning,
                })
            })
            .collect();
        Self { entries }
    }

    pub fn push(&mut self, query: impl Into<String>, reasoning: impl Into<String>) {
        self.entries.push(ThoughtEntry {
            query: query.into(),
            reasoning: reasoning.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ThoughtEntry] {
        &self.entries
    }
}

/// Up to `top_k` stored (query, reasoning) pairs by descending token-F1
/// similarity to `query`; equal scores keep insertion order.
pub fn retrieve_thought_template(query: &str, store: &TraceStore, top_k: usize) -> Vec<(String, String)> {
    let mut scored: Vec<(f64, &ThoughtEntry)> = store
        .entries
        .iter()
        .map(|e| (token_f1(query, &e.query), e))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored
        .into_iter()
        .take(top_k)
        .map(|(_, e)| (e.query.clone(), e.reasoning.clone()))
        .collect()
}

/// Preamble text for retrieved templates; empty when nothing was retrieved.
pub fn render_preamble(templates: &[(String, String)]) -> String {
    if templates.is_empty() {
        return String::new();
    }
    let mut out = String::from("Here is reasoning from similar queries. Use it as a template for your own reasoning.\n");
    for (i, (q, r)) in templates.iter().enumerate() {
        out.push_str(&format!("\nExample {}:\nQuery: {q}\nReasoning: {r}\n", i + 1));
    }
    out
}
