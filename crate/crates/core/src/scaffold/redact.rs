use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::grading::RunnerSpec;

pub const DEFAULT_REDACTION_THRESHOLD: usize = 8;
pub const MIN_REDACTION_THRESHOLD: usize = 3;
pub const REDACTION_MARKER: &str = "[solution redacted]";
const MAX_PASSES: usize = 8;

/// Comment syntax of one language.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommentRules {
    pub line: Vec<String>,
    pub block: Vec<(String, String)>,
}

impl CommentRules {
    pub fn from_runner(spec: &RunnerSpec) -> Self {
        CommentRules { line: spec.line_comments.clone(), block: spec.block_comments.clone() }
    }

    pub fn python() -> Self {
        CommentRules { line: vec!["#".into()], block: Vec::new() }
    }

    pub fn c_like() -> Self {
        CommentRules { line: vec!["//".into()], block: vec![("/*".into(), "*/".into())] }
    }

    /// Byte ranges covered by comments, in order.
    fn ranges(&self, text: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut i = 0;
        'scan: while i < text.len() {
            let rest = &text[i..];
            for (open, close) in &self.block {
                if !open.is_empty() && rest.starts_with(open.as_str()) {
                    let body = i + open.len();
                    let end = text[body..].find(close.as_str()).map(|p| body + p + close.len()).unwrap_or(text.len());
                    out.push((i, end));
                    i = end;
                    continue 'scan;
                }
            }
            for prefix in &self.line {
                if !prefix.is_empty() && rest.starts_with(prefix.as_str()) {
                    let end = text[i..].find('\n').map(|p| i + p).unwrap_or(text.len());
                    out.push((i, end));
                    i = end;
                    continue 'scan;
                }
            }
            i += rest.chars().next().map(char::len_utf8).unwrap_or(1);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RedactionReport {
    pub matched_spans: usize,
    pub redacted: bool,
}

impl RedactionReport {
    pub fn merge(&mut self, other: RedactionReport) {
        self.matched_spans += other.matched_spans;
        self.redacted |= other.redacted;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redaction {
    pub text: String,
    pub report: RedactionReport,
}

#[derive(Debug, Clone)]
struct Token {
    norm: String,
    start: usize,
    end: usize,
}

/// Lowercased word runs plus every other non-space character on its own.
fn tokens(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word: Option<(usize, String)> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() || c == '_' {
            word.get_or_insert_with(|| (i, String::new())).1.extend(c.to_lowercase());
            continue;
        }
        if let Some((start, norm)) = word.take() {
            out.push(Token { norm, start, end: i });
        }
        if !c.is_whitespace() {
            out.push(Token { norm: c.to_string(), start: i, end: i + c.len_utf8() });
        }
    }
    if let Some((start, norm)) = word {
        out.push(Token { norm, start, end: text.len() });
    }
    out
}

fn without_comments(toks: &[Token], comments: &[(usize, usize)]) -> Vec<Token> {
    toks.iter().filter(|t| !comments.iter().any(|(s, e)| t.start >= *s && t.start < *e)).cloned().collect()
}

/// The two candidate views: every token, and tokens outside comments.
fn candidate_views(text: &str, rules: &CommentRules) -> [Vec<Token>; 2] {
    let all = tokens(text);
    let stripped = without_comments(&all, &rules.ranges(text));
    [all, stripped]
}

fn reference_tokens(reference: &str, rules: &CommentRules) -> Vec<String> {
    without_comments(&tokens(reference), &rules.ranges(reference)).into_iter().map(|t| t.norm).collect()
}

/// For each candidate position, the longest common run with the reference
/// ending there.
fn run_lengths(candidate: &[Token], reference: &[u32], ids: &HashMap<String, u32>) -> Vec<u32> {
    let m = reference.len();
    let mut prev = vec![0u32; m + 1];
    let mut cur = vec![0u32; m + 1];
    let mut best = Vec::with_capacity(candidate.len());
    for tok in candidate {
        let id = ids.get(&tok.norm).copied();
        let mut longest = 0;
        for j in 1..=m {
            cur[j] = if Some(reference[j - 1]) == id { prev[j - 1] + 1 } else { 0 };
            longest = longest.max(cur[j]);
        }
        best.push(longest);
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

fn effective_threshold(threshold: usize, reference_len: usize) -> usize {
    threshold.max(MIN_REDACTION_THRESHOLD).min(reference_len.max(MIN_REDACTION_THRESHOLD))
}

/// Byte ranges of the candidate covered by a common run of at least
/// `threshold` normalized tokens, merged across whitespace.
fn matched_ranges(candidate: &str, reference: &[String], threshold: usize, rules: &CommentRules) -> Vec<(usize, usize)> {
    let mut ids: HashMap<String, u32> = HashMap::new();
    let reference: Vec<u32> = reference
        .iter()
        .map(|t| {
            let next = ids.len() as u32;
            *ids.entry(t.clone()).or_insert(next)
        })
        .collect();
    let mut ranges = Vec::new();
    for view in candidate_views(candidate, rules) {
        let lengths = run_lengths(&view, &reference, &ids);
        for (i, len) in lengths.iter().enumerate() {
            let len = *len as usize;
            if len >= threshold {
                ranges.push((view[i + 1 - len].start, view[i].end));
            }
        }
    }
    ranges.sort();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in ranges {
        if let Some(last) = merged.last_mut() {
            if s <= last.1 || candidate[last.1..s].trim().is_empty() {
                last.1 = last.1.max(e);
                continue;
            }
        }
        merged.push((s, e));
    }
    merged
}

/// Replaces every stretch of `candidate` that shares a run of at least
/// `threshold` normalized tokens with `reference` by a marker. Both sides are
/// compared case-insensitively, ignoring whitespace layout and comments.
/// Thresholds below three are raised to three; a reference shorter than the
/// threshold is matched as a whole.
pub fn redact_solution(candidate: &str, reference: &str, threshold: usize, rules: &CommentRules) -> Redaction {
    let reference = reference_tokens(reference, rules);
    let threshold = effective_threshold(threshold, reference.len());
    let mut text = candidate.to_string();
    let mut report = RedactionReport::default();
    if reference.len() < threshold {
        return Redaction { text, report };
    }
    for _ in 0..MAX_PASSES {
        let spans = matched_ranges(&text, &reference, threshold, rules);
        if spans.is_empty() {
            break;
        }
        report.matched_spans += spans.len();
        report.redacted = true;
        for (s, e) in spans.into_iter().rev() {
            text.replace_range(s..e, REDACTION_MARKER);
        }
    }
    Redaction { text, report }
}

/// Longest normalized token run shared by `candidate` and `reference`.
pub fn longest_common_run(candidate: &str, reference: &str, rules: &CommentRules) -> usize {
    let reference = reference_tokens(reference, rules);
    let mut ids: HashMap<String, u32> = HashMap::new();
    let reference: Vec<u32> = reference
        .iter()
        .map(|t| {
            let next = ids.len() as u32;
            *ids.entry(t.clone()).or_insert(next)
        })
        .collect();
    candidate_views(candidate, rules)
        .iter()
        .flat_map(|v| run_lengths(v, &reference, &ids))
        .max()
        .unwrap_or(0) as usize
}
