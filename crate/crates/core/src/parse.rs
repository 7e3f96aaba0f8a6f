//! Mapping free-text model output onto task candidates.
//!
//! Line handling, applied to the extracted answer:
//!
//! 1. The answer is split on `\n`; lines that are empty after trimming are
//!    ignored.
//! 2. One list marker is stripped from the start of the line. The marker
//!    grammar is the regular expression `^\s*(?:[0-9]+[.)\-]|[-*])\s+`.
//! 3. The remainder is matched with [`match_candidate`].
//!
//! Matching tries, in order: the exact id (after trimming), a normalized
//! equality against each candidate's id or text (lowercased alphanumeric
//! tokens joined by single spaces), and finally the best token-F1 against
//! candidate text, accepted when it reaches the threshold. All ties resolve
//! to the earliest candidate in the pool.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::types::{Candidate, CandidateId, RankingTask, RawRankingOutput};

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.5;

static ANSWER_SPAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<answer>(.*?)</answer>").unwrap());
static THINK_SPAN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)<think>(.*?)</think>").unwrap());
static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[0-9]+[.)\-]|[-*])\s+").unwrap());

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("answer names no candidate of the pool")]
    NoMatch,
}

/// Lowercase alphanumeric tokens of `s`.
pub fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn normalize(s: &str) -> String {
    tokens(s).join(" ")
}

/// Bag-of-tokens F1 between two strings; 0 when either has no tokens.
pub fn token_f1(a: &str, b: &str) -> f64 {
    let ta = tokens(a);
    let tb = tokens(b);
    if ta.is_empty() || tb.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tb {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &ta {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / ta.len() as f64;
    let r = overlap as f64 / tb.len() as f64;
    2.0 * p * r / (p + r)
}

/// Content of the last `<answer>...</answer>` span, or the text with
/// `<think>` spans removed when no answer span exists.
pub fn extract_answer(text: &str) -> String {
    match ANSWER_SPAN.captures_iter(text).last() {
        Some(c) => c[1].trim().to_string(),
        None => THINK_SPAN.replace_all(text, "").trim().to_string(),
    }
}

/// Text of the `<think>` spans joined by newlines. A reply continuing a
/// prefilled `<think>` has no opening tag, so text before a bare
/// `</think>` counts as reasoning.
pub fn extract_reasoning(text: &str) -> Option<String> {
    let spans: Vec<&str> = THINK_SPAN
        .captures_iter(text)
        .map(|c| c.get(1).map_or("", |m| m.as_str()).trim())
        .filter(|s| !s.is_empty())
        .collect();
    if !spans.is_empty() {
        return Some(spans.join("\n"));
    }
    match text.find("</think>") {
        Some(end) if !text[..end].contains("<think>") => {
            Some(text[..end].trim().to_string()).filter(|s| !s.is_empty())
        }
        _ => None,
    }
}

pub fn strip_list_marker(line: &str) -> &str {
    match LIST_MARKER.find(line) {
        Some(m) => &line[m.end()..],
        None => line,
    }
    .trim()
}

pub fn match_candidate<'a, C>(line: &str, pool: &'a [C], config: MatchConfig) -> Option<&'a Candidate>
where
    C: AsRef<Candidate>,
{
    let trimmed = line.trim();
    if let Some(c) = pool.iter().map(AsRef::as_ref).find(|c| c.id == trimmed) {
        return Some(c);
    }
    let norm = normalize(trimmed);
    if !norm.is_empty() {
        if let Some(c) = pool
            .iter()
            .map(AsRef::as_ref)
            .find(|c| normalize(&c.id) == norm || normalize(&c.text) == norm)
        {
            return Some(c);
        }
    }
    let mut best: Option<(&Candidate, f64)> = None;
    for c in pool.iter().map(AsRef::as_ref) {
        let s = token_f1(trimmed, &c.text);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    best.filter(|(_, s)| *s >= config.threshold && *s > 0.0)
        .map(|(c, _)| c)
}

fn answer_lines(answer: &str) -> impl Iterator<Item = &str> {
    answer.lines().filter(|l| !l.trim().is_empty())
}

/// Parses a one-shot ranking answer into matched ids plus error counts.
pub fn parse_ranking(text: &str, task: &RankingTask, config: MatchConfig) -> RawRankingOutput {
    let answer = extract_answer(text);
    let mut out = RawRankingOutput::default();
    let mut seen: HashSet<CandidateId> = HashSet::new();
    for line in answer_lines(&answer) {
        match match_candidate(strip_list_marker(line), &task.candidates, config) {
            Some(c) if seen.insert(c.id.clone()) => out.matched.push(c.id.clone()),
            Some(_) => out.duplicates_dropped += 1,
            None => out.hallucinated_count += 1,
        }
    }
    out
}

/// Parses a single-exclusion answer; the first answer line that names a
/// pool member wins.
pub fn parse_exclusion<C>(text: &str, pool: &[C], config: MatchConfig) -> Result<CandidateId, ParseError>
where
    C: AsRef<Candidate>,
{
    let answer = extract_answer(text);
    let found = answer_lines(&answer)
        .find_map(|line| match_candidate(strip_list_marker(line), pool, config))
        .map(|c| c.id.clone());
    found.ok_or(ParseError::NoMatch)
}

impl AsRef<Candidate> for Candidate {
    fn as_ref(&self) -> &Candidate {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Query, ScenarioSpec};

    fn pool(items: &[(&str, &str)]) -> Vec<Candidate> {
        items.iter().map(|(id, text)| Candidate::new(*id, *text)).collect()
    }

    fn task(items: &[(&str, &str)]) -> RankingTask {
        RankingTask {
            id: "t".into(),
            query: Query::text("q"),
            candidates: pool(items),
            positives: [items[0].0.to_string()].into(),
            scenario: ScenarioSpec::synthetic(items.len(), 1, 0),
        }
    }

    #[test]
    fn reasoning_spans() {
        assert_eq!(extract_reasoning("<think>a</think>x<think> b </think><answer>y</answer>").as_deref(), Some("a\nb"));
        assert_eq!(extract_reasoning("continued thought</think><answer>y</answer>").as_deref(), Some("continued thought"));
        assert_eq!(extract_reasoning("<answer>y</answer>"), None);
        assert_eq!(extract_reasoning("<think> </think>"), None);
    }

    #[test]
    fn extract_answer_cases() {
        assert_eq!(
            extract_answer("<think>hmm</think><answer>passage 3</answer>"),
            "passage 3"
        );
        assert_eq!(extract_answer("plain text"), "plain text");
        assert_eq!(
            extract_answer("<answer>a</answer> then <answer>b</answer>"),
            "b"
        );
        assert_eq!(extract_answer("<think>x</think>passage 1"), "passage 1");
        assert_eq!(extract_answer("<answer>unclosed"), "<answer>unclosed");
    }

    #[test]
    fn list_markers() {
        assert_eq!(strip_list_marker("1. 'Tashunga'"), "'Tashunga'");
        assert_eq!(strip_list_marker("  12) foo"), "foo");
        assert_eq!(strip_list_marker("- foo"), "foo");
        assert_eq!(strip_list_marker("* foo"), "foo");
        assert_eq!(strip_list_marker("3- foo"), "foo");
        assert_eq!(strip_list_marker("passage 3"), "passage 3");
        assert_eq!(strip_list_marker("1.1 Star Trek"), "1.1 Star Trek");
    }

    #[test]
    fn token_f1_values() {
        assert_eq!(token_f1("a b", "a b"), 1.0);
        assert_eq!(token_f1("", "a"), 0.0);
        assert!((token_f1("Star Trek Wrath of Khan", "Star Trek: The Wrath of Khan") - 10.0 / 11.0).abs() < 1e-12);
        // Bag semantics: repeated tokens only match as often as they occur.
        assert!((token_f1("a a", "a b") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn match_exact_id() {
        let p = pool(&[("Mistral-7b", "fast model"), ("LLaMA-2 (7b)", "light")]);
        assert_eq!(
            match_candidate("Mistral-7b", &p, MatchConfig::default()).map(|c| c.id.as_str()),
            Some("Mistral-7b")
        );
    }

    #[test]
    fn match_normalized_case() {
        let p = pool(&[("p1", "passage 1"), ("p3", "Passage 3")]);
        assert_eq!(
            match_candidate("passage 3", &p, MatchConfig::default()).map(|c| c.id.as_str()),
            Some("p3")
        );
        let models = pool(&[("Qwen-1.5 (72b)", "versatile")]);
        assert!(match_candidate("Qwen-1. 5 (72b)", &models, MatchConfig::default()).is_some());
    }

    #[test]
    fn match_fuzzy_title() {
        let p = pool(&[
            ("m1", "Star Trek: First Contact"),
            ("m2", "Star Trek: The Wrath of Khan"),
            ("m3", "Star Trek: Insurrection"),
        ]);
        // Oracle: token F1 against each title, highest wins.
        let line = "Star Trek Wrath of Khan";
        let scores: Vec<f64> = p.iter().map(|c| token_f1(line, &c.text)).collect();
        let argmax = scores
            .iter()
            .enumerate()
            .fold(0, |b, (i, s)| if *s > scores[b] { i } else { b });
        assert_eq!(argmax, 1);
        assert_eq!(
            match_candidate(line, &p, MatchConfig::default()).map(|c| c.id.as_str()),
            Some("m2")
        );
        assert!(match_candidate("Lassie", &p, MatchConfig::default()).is_none());
    }

    #[test]
    fn fuzzy_ties_go_to_pool_order() {
        let p = pool(&[("a", "red apple"), ("b", "red apple pie"), ("c", "red apple")]);
        // "apple" scores 2/3 against "red apple" (both a and c) and 0.5 against b.
        assert_eq!(
            match_candidate("apple", &p, MatchConfig::default()).map(|c| c.id.as_str()),
            Some("a")
        );
    }

    #[test]
    fn parse_ranking_counts() {
        let t = task(&[("a", "Alpha"), ("b", "Bravo"), ("c", "Charlie")]);
        let out = parse_ranking("<answer>1. Bravo\n2. Alpha\n3. Charlie</answer>", &t, MatchConfig::default());
        assert_eq!(out, RawRankingOutput::perfect(vec!["b".into(), "a".into(), "c".into()]));
        let out = parse_ranking("<answer>Bravo\nbravo\nAlpha\nZulu\n\n</answer>", &t, MatchConfig::default());
        assert_eq!(out.matched, vec!["b".to_string(), "a".to_string()]);
        assert_eq!(out.duplicates_dropped, 1);
        assert_eq!(out.hallucinated_count, 1);
    }

    #[test]
    fn parse_exclusion_cases() {
        let p = pool(&[("passage 1", "text one"), ("passage 3", "text three")]);
        let cfg = MatchConfig::default();
        assert_eq!(parse_exclusion("<answer>passage 3</answer>", &p, cfg), Ok("passage 3".into()));
        assert_eq!(
            parse_exclusion("<answer>passage 2</answer>", &p, cfg),
            Err(ParseError::NoMatch)
        );
        assert_eq!(
            parse_exclusion("<answer>none of these\npassage 1</answer>", &p, cfg),
            Ok("passage 1".into())
        );
        assert_eq!(parse_exclusion("", &p, cfg), Err(ParseError::NoMatch));
    }
}
