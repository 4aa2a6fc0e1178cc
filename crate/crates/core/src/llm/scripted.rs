use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionRequest, LanguageModel, RoleTag};

pub const SCRIPT_SCHEMA: &str = "h2r-script-v1";

/// Separates conjunctive parts of a match key: every part must occur in the
/// prompt. A key without the separator is a plain substring test.
pub const KEY_SEPARATOR: &str = " && ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub role: RoleTag,
    #[serde(rename = "match")]
    pub match_key: String,
    pub response: String,
}

impl ScriptEntry {
    pub fn new(role: RoleTag, match_key: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            role,
            match_key: match_key.into(),
            response: response.into(),
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        self.match_key.split(KEY_SEPARATOR).all(|part| prompt.contains(part))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    pub schema: String,
    pub entries: Vec<ScriptEntry>,
}

impl ScriptFile {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self {
            schema: SCRIPT_SCHEMA.to_string(),
            entries,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("script serializes");
        s.push('\n');
        s
    }
}

/// Offline backend: answers with the response of the first entry whose role
/// matches and whose key occurs in the prompt. Every answered request is
/// logged for inspection.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    log: Mutex<Vec<(CompletionRequest, String)>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        let mut seen: HashSet<(RoleTag, &str)> = HashSet::new();
        for e in &entries {
            if e.match_key.is_empty() {
                return Err(BackendError::Script(format!("empty match key for role {}", e.role)));
            }
            if !seen.insert((e.role, e.match_key.as_str())) {
                return Err(BackendError::Script(format!(
                    "duplicate match key for role {}: {:?}",
                    e.role, e.match_key
                )));
            }
        }
        Ok(Self {
            entries,
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let file: ScriptFile = serde_json::from_str(text).map_err(|e| BackendError::Script(e.to_string()))?;
        if file.schema != SCRIPT_SCHEMA {
            return Err(BackendError::Script(format!("unsupported script schema {:?}", file.schema)));
        }
        Self::new(file.entries)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// Requests answered so far, in call order.
    pub fn history(&self) -> Vec<(CompletionRequest, String)> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("log lock").len()
    }

    pub fn calls_by_role(&self) -> BTreeMap<RoleTag, usize> {
        let mut m = BTreeMap::new();
        for (req, _) in self.log.lock().expect("log lock").iter() {
            *m.entry(req.role_tag).or_insert(0) += 1;
        }
        m
    }

    pub fn clear_history(&self) {
        self.log.lock().expect("log lock").clear();
    }
}

impl LanguageModel for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt(request.role_tag));
        }
        let entry = self
            .entries
            .iter()
            .find(|e| e.role == request.role_tag && e.matches(&request.prompt))
            .ok_or_else(|| BackendError::NoMatchingEntry {
                role: request.role_tag,
                excerpt: request.prompt.chars().take(160).collect(),
            })?;
        self.log
            .lock()
            .expect("log lock")
            .push((request.clone(), entry.response.clone()));
        Ok(entry.response.clone())
    }
}
