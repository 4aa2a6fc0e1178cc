//! The two hierarchical memory components and their persistence.
//!
//! A component holds units of a single level. High-level units are keyed by
//! task description, low-level units by subgoal text; keys are embedded on
//! insert and re-embedded on load (vectors are never written to disk).
//!
//! File layout (`h2r-mem-v1`): a header line
//! `h2r-mem-v1 level=<high|low> encoder=<name>` followed by one JSON record
//! per unit.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{top_k, EmbedError, Encoder, EmbeddingVector, Scalar};
use crate::insight::InsightId;
use crate::types::{Step, Subgoal, SubgoalSequence};

pub const MEMORY_SCHEMA: &str = "h2r-mem-v1";
pub const HIGH_MEMORY_FILE: &str = "memory_high.v1";
pub const LOW_MEMORY_FILE: &str = "memory_low.v1";
pub const DEFAULT_K: usize = 2;

pub type UnitId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    High,
    Low,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::High => "high",
            Level::Low => "low",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighLevelUnit {
    pub id: UnitId,
    pub task_description: String,
    pub subgoal_sequence: SubgoalSequence,
    pub insight_ids: Vec<InsightId>,
    pub insight_texts: Vec<String>,
}

impl HighLevelUnit {
    /// A unit with no insights attached yet.
    pub fn placeholder(task_description: impl Into<String>, subgoal_sequence: SubgoalSequence) -> Self {
        Self {
            id: 0,
            task_description: task_description.into(),
            subgoal_sequence,
            insight_ids: Vec::new(),
            insight_texts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowLevelUnit {
    pub id: UnitId,
    pub subgoal: Subgoal,
    pub sub_trajectory: Vec<Step>,
    pub insight_ids: Vec<InsightId>,
    pub insight_texts: Vec<String>,
}

impl LowLevelUnit {
    pub fn placeholder(subgoal: Subgoal, sub_trajectory: Vec<Step>) -> Self {
        Self {
            id: 0,
            subgoal,
            sub_trajectory,
            insight_ids: Vec::new(),
            insight_texts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum MemoryUnit {
    High(HighLevelUnit),
    Low(LowLevelUnit),
}

impl MemoryUnit {
    pub fn level(&self) -> Level {
        match self {
            MemoryUnit::High(_) => Level::High,
            MemoryUnit::Low(_) => Level::Low,
        }
    }

    pub fn id(&self) -> UnitId {
        match self {
            MemoryUnit::High(u) => u.id,
            MemoryUnit::Low(u) => u.id,
        }
    }

    fn set_id(&mut self, id: UnitId) {
        match self {
            MemoryUnit::High(u) => u.id = id,
            MemoryUnit::Low(u) => u.id = id,
        }
    }

    /// Text embedded for retrieval.
    pub fn key(&self) -> &str {
        match self {
            MemoryUnit::High(u) => &u.task_description,
            MemoryUnit::Low(u) => u.subgoal.as_str(),
        }
    }

    pub fn insight_ids(&self) -> &[InsightId] {
        match self {
            MemoryUnit::High(u) => &u.insight_ids,
            MemoryUnit::Low(u) => &u.insight_ids,
        }
    }

    fn set_insights(&mut self, ids: Vec<InsightId>, texts: Vec<String>) {
        match self {
            MemoryUnit::High(u) => {
                u.insight_ids = ids;
                u.insight_texts = texts;
            }
            MemoryUnit::Low(u) => {
                u.insight_ids = ids;
                u.insight_texts = texts;
            }
        }
    }
}

impl From<HighLevelUnit> for MemoryUnit {
    fn from(u: HighLevelUnit) -> Self {
        MemoryUnit::High(u)
    }
}

impl From<LowLevelUnit> for MemoryUnit {
    fn from(u: LowLevelUnit) -> Self {
        MemoryUnit::Low(u)
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("level mismatch: {unit} unit in {component} component")]
    LevelMismatch { component: Level, unit: Level },
    #[error("no unit with id {0}")]
    UnknownUnit(UnitId),
    #[error("insight ids and texts differ in length ({ids} vs {texts})")]
    InsightArity { ids: usize, texts: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("schema mismatch: expected {MEMORY_SCHEMA}, found {0:?}")]
    SchemaMismatch(String),
    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("memory file i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One level of hierarchical memory.
pub struct MemoryComponent<T: Scalar = f64> {
    level: Level,
    units: Vec<MemoryUnit>,
    keys: Vec<EmbeddingVector<T>>,
    encoder: Arc<dyn Encoder<T>>,
}

impl<T: Scalar> fmt::Debug for MemoryComponent<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryComponent")
            .field("level", &self.level)
            .field("encoder", &self.encoder.name())
            .field("units", &self.units.len())
            .finish()
    }
}

impl<T: Scalar> MemoryComponent<T> {
    pub fn new(level: Level, encoder: Arc<dyn Encoder<T>>) -> Self {
        Self {
            level,
            units: Vec::new(),
            keys: Vec::new(),
            encoder,
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn encoder_name(&self) -> &str {
        self.encoder.name()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[MemoryUnit] {
        &self.units
    }

    pub fn high_units(&self) -> impl Iterator<Item = &HighLevelUnit> {
        self.units.iter().filter_map(|u| match u {
            MemoryUnit::High(h) => Some(h),
            MemoryUnit::Low(_) => None,
        })
    }

    pub fn low_units(&self) -> impl Iterator<Item = &LowLevelUnit> {
        self.units.iter().filter_map(|u| match u {
            MemoryUnit::Low(l) => Some(l),
            MemoryUnit::High(_) => None,
        })
    }

    /// Appends `unit` with the next id and embeds its key. Returns the id.
    pub fn insert(&mut self, unit: impl Into<MemoryUnit>) -> Result<UnitId, MemoryError> {
        let mut unit = unit.into();
        if unit.level() != self.level {
            return Err(MemoryError::LevelMismatch {
                component: self.level,
                unit: unit.level(),
            });
        }
        let id = self.units.last().map_or(0, |u| u.id() + 1);
        unit.set_id(id);
        let key = self.encoder.embed(unit.key())?;
        self.units.push(unit);
        self.keys.push(key);
        Ok(id)
    }

    /// Replaces the grounded insights of unit `id`.
    pub fn attach_insights(&mut self, id: UnitId, ids: Vec<InsightId>, texts: Vec<String>) -> Result<(), MemoryError> {
        if ids.len() != texts.len() {
            return Err(MemoryError::InsightArity {
                ids: ids.len(),
                texts: texts.len(),
            });
        }
        let pos = self
            .units
            .binary_search_by_key(&id, MemoryUnit::id)
            .map_err(|_| MemoryError::UnknownUnit(id))?;
        self.units[pos].set_insights(ids, texts);
        Ok(())
    }

    fn ranked(&self, query: &str, k: usize) -> Result<Vec<&MemoryUnit>, MemoryError> {
        if self.units.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let q = self.encoder.embed(query)?;
        Ok(top_k(&q, &self.keys, k).into_iter().map(|i| &self.units[i]).collect())
    }

    /// Top-k high-level units by cosine similarity of task descriptions.
    pub fn retrieve_high(&self, task_description: &str, k: usize) -> Result<Vec<&HighLevelUnit>, MemoryError> {
        if self.level != Level::High {
            return Err(MemoryError::LevelMismatch {
                component: self.level,
                unit: Level::High,
            });
        }
        Ok(self
            .ranked(task_description, k)?
            .into_iter()
            .filter_map(|u| match u {
                MemoryUnit::High(h) => Some(h),
                MemoryUnit::Low(_) => None,
            })
            .collect())
    }

    /// Top-k low-level units by cosine similarity of subgoal texts.
    pub fn retrieve_low(&self, subgoal_text: &str, k: usize) -> Result<Vec<&LowLevelUnit>, MemoryError> {
        if self.level != Level::Low {
            return Err(MemoryError::LevelMismatch {
                component: self.level,
                unit: Level::Low,
            });
        }
        Ok(self
            .ranked(subgoal_text, k)?
            .into_iter()
            .filter_map(|u| match u {
                MemoryUnit::Low(l) => Some(l),
                MemoryUnit::High(_) => None,
            })
            .collect())
    }

    /// Serialized file content; identical components give identical bytes.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("{MEMORY_SCHEMA} level={} encoder={}\n", self.level, self.encoder.name());
        for unit in &self.units {
            out.push_str(&serde_json::to_string(unit).expect("memory units serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_file_string().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, encoder: Arc<dyn Encoder<T>>) -> Result<Self, MemoryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_str(&text, encoder)
    }

    pub fn from_file_str(text: &str, encoder: Arc<dyn Encoder<T>>) -> Result<Self, MemoryError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let mut fields = header.split(' ');
        let schema = fields.next().unwrap_or("");
        if schema != MEMORY_SCHEMA {
            return Err(MemoryError::SchemaMismatch(schema.to_string()));
        }
        let mut level = None;
        let mut stored_encoder = None;
        for field in fields {
            match field.split_once('=') {
                Some(("level", "high")) => level = Some(Level::High),
                Some(("level", "low")) => level = Some(Level::Low),
                Some(("encoder", name)) => stored_encoder = Some(name.to_string()),
                _ => {
                    return Err(MemoryError::MalformedRecord {
                        line: 1,
                        message: format!("unexpected header field {field:?}"),
                    })
                }
            }
        }
        let level = level.ok_or_else(|| MemoryError::MalformedRecord {
            line: 1,
            message: "header lacks level".into(),
        })?;
        if let Some(name) = stored_encoder {
            if name != encoder.name() {
                log::warn!("memory was built with encoder {name}, re-embedding with {}", encoder.name());
            }
        }
        let mut component = Self::new(level, encoder);
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let unit: MemoryUnit = serde_json::from_str(line).map_err(|e| MemoryError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
            if unit.level() != level {
                return Err(MemoryError::MalformedRecord {
                    line: line_no,
                    message: format!("{} unit in {level} file", unit.level()),
                });
            }
            if let Some(prev) = component.units.last() {
                if unit.id() <= prev.id() {
                    return Err(MemoryError::MalformedRecord {
                        line: line_no,
                        message: format!("unit id {} not ascending", unit.id()),
                    });
                }
            }
            let key = component.encoder.embed(unit.key())?;
            component.units.push(unit);
            component.keys.push(key);
        }
        Ok(component)
    }
}
