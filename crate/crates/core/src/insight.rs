//! Capacity-bounded, importance-voted set of natural-language insights.
//!
//! The model never sees insight ids. It sees [`InsightStore::render_numbered`]
//! and answers with ordinal-addressed edit lines:
//!
//! ```text
//! ADD <text>
//! MODIFY <ordinal> <text>
//! UPVOTE <ordinal>
//! DOWNVOTE <ordinal>
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INITIAL_IMPORTANCE: u32 = 2;
pub const DEFAULT_CAPACITY: usize = 20;

pub type InsightId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    pub id: InsightId,
    pub text: String,
    pub importance: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsightEdit {
    Add { text: String },
    Modify { target: InsightId, text: String },
    Upvote { target: InsightId },
    Downvote { target: InsightId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditOutcome {
    Added { id: InsightId, evicted: Option<Insight> },
    /// Store full and nothing ranks below a newcomer.
    Rejected,
    Modified,
    Upvoted { importance: u32 },
    Downvoted { importance: u32, removed: bool },
}

impl EditOutcome {
    /// Change in the store's summed importance caused by this outcome.
    pub fn importance_delta(&self) -> i64 {
        match self {
            EditOutcome::Added { evicted, .. } => {
                i64::from(INITIAL_IMPORTANCE) - evicted.as_ref().map_or(0, |e| i64::from(e.importance))
            }
            EditOutcome::Rejected | EditOutcome::Modified => 0,
            EditOutcome::Upvoted { .. } => 1,
            EditOutcome::Downvoted { .. } => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InsightError {
    #[error("unknown insight id {0}")]
    UnknownTarget(InsightId),
    #[error("insight text already present: {0:?}")]
    DuplicateText(String),
    #[error("insight text must not be empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}: {content:?}")]
pub struct EditParseError {
    /// 1-based line number in the model output.
    pub line: usize,
    pub content: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsightStore {
    insights: Vec<Insight>,
    next_id: InsightId,
    capacity: usize,
}

impl Default for InsightStore {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl InsightStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            insights: Vec::new(),
            next_id: 0,
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.insights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insights.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Insights in ascending id order.
    pub fn insights(&self) -> &[Insight] {
        &self.insights
    }

    pub fn get(&self, id: InsightId) -> Option<&Insight> {
        self.position(id).map(|i| &self.insights[i])
    }

    pub fn total_importance(&self) -> u64 {
        self.insights.iter().map(|i| u64::from(i.importance)).sum()
    }

    /// Ids in rendering order; entry `n - 1` is ordinal `n`.
    pub fn ordinal_ids(&self) -> Vec<InsightId> {
        self.insights.iter().map(|i| i.id).collect()
    }

    fn position(&self, id: InsightId) -> Option<usize> {
        self.insights.binary_search_by_key(&id, |i| i.id).ok()
    }

    fn contains_text(&self, text: &str, except: Option<InsightId>) -> bool {
        self.insights
            .iter()
            .any(|i| Some(i.id) != except && i.text == text)
    }

    pub fn apply_edit(&mut self, edit: InsightEdit) -> Result<EditOutcome, InsightError> {
        match edit {
            InsightEdit::Add { text } => self.add(text),
            InsightEdit::Modify { target, text } => {
                let pos = self.position(target).ok_or(InsightError::UnknownTarget(target))?;
                let text = normalize(&text)?;
                if self.contains_text(&text, Some(target)) {
                    return Err(InsightError::DuplicateText(text));
                }
                self.insights[pos].text = text;
                Ok(EditOutcome::Modified)
            }
            InsightEdit::Upvote { target } => {
                let pos = self.position(target).ok_or(InsightError::UnknownTarget(target))?;
                let insight = &mut self.insights[pos];
                insight.importance += 1;
                Ok(EditOutcome::Upvoted {
                    importance: insight.importance,
                })
            }
            InsightEdit::Downvote { target } => {
                let pos = self.position(target).ok_or(InsightError::UnknownTarget(target))?;
                let importance = self.insights[pos].importance - 1;
                let removed = importance == 0;
                if removed {
                    self.insights.remove(pos);
                } else {
                    self.insights[pos].importance = importance;
                }
                Ok(EditOutcome::Downvoted { importance, removed })
            }
        }
    }

    fn add(&mut self, text: String) -> Result<EditOutcome, InsightError> {
        let text = normalize(&text)?;
        if self.contains_text(&text, None) {
            return Err(InsightError::DuplicateText(text));
        }
        let mut evicted = None;
        if self.insights.len() >= self.capacity {
            // lowest importance, oldest id first
            let victim = self
                .insights
                .iter()
                .enumerate()
                .min_by_key(|(_, i)| (i.importance, i.id))
                .map(|(pos, i)| (pos, i.importance));
            match victim {
                Some((pos, importance)) if importance < INITIAL_IMPORTANCE => {
                    evicted = Some(self.insights.remove(pos));
                }
                _ => return Ok(EditOutcome::Rejected),
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.insights.push(Insight {
            id,
            text,
            importance: INITIAL_IMPORTANCE,
        });
        Ok(EditOutcome::Added { id, evicted })
    }

    /// `"{ordinal}. {text}"` per insight, ordinals dense from 1 by ascending
    /// id, lines joined by `\n`.
    pub fn render_numbered(&self) -> String {
        self.insights
            .iter()
            .enumerate()
            .map(|(i, ins)| format!("{}. {}", i + 1, ins.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Parses edit lines against this store's current numbering.
    pub fn parse_edits(&self, model_output: &str) -> Result<Vec<InsightEdit>, EditParseError> {
        parse_edits(model_output, &self.ordinal_ids())
    }
}

fn normalize(text: &str) -> Result<String, InsightError> {
    let t = text.trim();
    if t.is_empty() {
        Err(InsightError::EmptyText)
    } else {
        Ok(t.to_string())
    }
}

/// Decodes the edit line protocol. `ordinals[n - 1]` is the id shown as
/// ordinal `n`. Blank lines are ignored; an empty answer means no edits.
pub fn parse_edits(model_output: &str, ordinals: &[InsightId]) -> Result<Vec<InsightEdit>, EditParseError> {
    let mut edits = Vec::new();
    for (idx, raw) in model_output.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fail = |reason: &str| EditParseError {
            line: idx + 1,
            content: line.to_string(),
            reason: reason.to_string(),
        };
        let (verb, rest) = match line.split_once(char::is_whitespace) {
            Some((v, r)) => (v, r.trim()),
            None => (line, ""),
        };
        let resolve = |tok: &str| -> Result<InsightId, EditParseError> {
            let n: usize = tok.parse().map_err(|_| fail("ordinal is not a number"))?;
            if n == 0 || n > ordinals.len() {
                return Err(fail("ordinal out of range"));
            }
            Ok(ordinals[n - 1])
        };
        let edit = match verb {
            "ADD" => {
                if rest.is_empty() {
                    return Err(fail("ADD needs text"));
                }
                InsightEdit::Add { text: rest.to_string() }
            }
            "MODIFY" => {
                let (ord, text) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| fail("MODIFY needs an ordinal and text"))?;
                let text = text.trim();
                if text.is_empty() {
                    return Err(fail("MODIFY needs text"));
                }
                InsightEdit::Modify {
                    target: resolve(ord)?,
                    text: text.to_string(),
                }
            }
            "UPVOTE" | "DOWNVOTE" => {
                if rest.is_empty() || rest.contains(char::is_whitespace) {
                    return Err(fail("expected exactly one ordinal"));
                }
                let target = resolve(rest)?;
                if verb == "UPVOTE" {
                    InsightEdit::Upvote { target }
                } else {
                    InsightEdit::Downvote { target }
                }
            }
            _ => return Err(fail("unknown verb")),
        };
        edits.push(edit);
    }
    Ok(edits)
}
