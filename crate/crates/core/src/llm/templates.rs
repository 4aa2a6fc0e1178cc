use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::RoleTag;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template for {role} needs slot {slot:?}")]
    MissingSlot { role: RoleTag, slot: String },
    #[error("no template for role {0}")]
    UnknownRole(String),
    #[error("unterminated placeholder in template {0}")]
    Unterminated(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// A prompt with `{{slot}}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    role: RoleTag,
    pieces: Vec<Piece>,
}

impl Template {
    pub fn parse(role: RoleTag, source: &str) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut rest = source;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                pieces.push(Piece::Text(rest[..open].to_string()));
            }
            let after = &rest[open + 2..];
            let close = after
                .find("}}")
                .ok_or_else(|| TemplateError::Unterminated(role.to_string()))?;
            pieces.push(Piece::Slot(after[..close].trim().to_string()));
            rest = &after[close + 2..];
        }
        if !rest.is_empty() {
            pieces.push(Piece::Text(rest.to_string()));
        }
        Ok(Self { role, pieces })
    }

    /// Slot names in first-use order.
    pub fn slots(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.pieces {
            if let Piece::Slot(s) = p {
                if !out.contains(&s.as_str()) {
                    out.push(s);
                }
            }
        }
        out
    }

    /// Single-pass substitution: slot values are inserted verbatim and never
    /// re-scanned for placeholders.
    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::new();
        for p in &self.pieces {
            match p {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = slots
                        .iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::MissingSlot {
                            role: self.role,
                            slot: name.clone(),
                        })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

const BUILTIN: [(RoleTag, &str); 8] = [
    (RoleTag::SubgoalInference, include_str!("../../templates/v1/subgoal_inference.txt")),
    (RoleTag::Partition, include_str!("../../templates/v1/partition.txt")),
    (RoleTag::HighInsight, include_str!("../../templates/v1/high_insight.txt")),
    (RoleTag::LowInsight, include_str!("../../templates/v1/low_insight.txt")),
    (RoleTag::Grounding, include_str!("../../templates/v1/grounding.txt")),
    (RoleTag::Planner, include_str!("../../templates/v1/planner.txt")),
    (RoleTag::Executor, include_str!("../../templates/v1/executor.txt")),
    (RoleTag::Reflexion, include_str!("../../templates/v1/reflexion.txt")),
];

/// One template per pipeline role. The shipped `templates/v1/*.txt` files
/// are compiled in; [`TemplateSet::load_dir`] overrides any of them from
/// disk without a rebuild.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<RoleTag, Template>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(role, src)| (*role, Template::parse(*role, src).expect("builtin templates parse")))
            .collect();
        Self { templates }
    }

    /// Reads `{role}.txt` from `dir` for each role, falling back to the
    /// builtin template when a file is absent.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for role in RoleTag::ALL {
            let path = dir.join(format!("{}.txt", role.as_str()));
            if !path.exists() {
                continue;
            }
            let src = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            set.templates.insert(role, Template::parse(role, &src)?);
        }
        Ok(set)
    }

    pub fn get(&self, role: RoleTag) -> &Template {
        &self.templates[&role]
    }

    pub fn render(&self, role: RoleTag, slots: &[(&str, &str)]) -> Result<String, TemplateError> {
        self.get(role).render(slots)
    }

    /// Looks a role up by its wire name.
    pub fn render_named(&self, role: &str, slots: &[(&str, &str)]) -> Result<String, TemplateError> {
        let role = RoleTag::parse(role).ok_or_else(|| TemplateError::UnknownRole(role.to_string()))?;
        self.render(role, slots)
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subgoal_inference_slots() {
        let set = TemplateSet::builtin();
        let slots = [("task", "clean a pan"), ("trajectory", "> go to sinkbasin\nok\n")];
        let p = set.render(RoleTag::SubgoalInference, &slots).unwrap();
        assert!(p.contains("clean a pan"));
        assert!(p.contains("> go to sinkbasin\nok\n"));
        assert_eq!(p, set.render(RoleTag::SubgoalInference, &slots).unwrap());
        let err = set.render(RoleTag::SubgoalInference, &[("task", "x")]).unwrap_err();
        assert_eq!(
            err,
            TemplateError::MissingSlot {
                role: RoleTag::SubgoalInference,
                slot: "trajectory".into()
            }
        );
        assert!(matches!(set.render_named("barman", &[]), Err(TemplateError::UnknownRole(_))));
    }

    #[test]
    fn values_are_not_rescanned_or_truncated() {
        let t = Template::parse(RoleTag::Planner, "a {{x}} b {{y}}").unwrap();
        let long = "z".repeat(100_000);
        let out = t.render(&[("x", "{{y}}"), ("y", &long)]).unwrap();
        assert_eq!(out, format!("a {{{{y}}}} b {long}"));
        assert!(matches!(
            Template::parse(RoleTag::Planner, "oops {{x"),
            Err(TemplateError::Unterminated(_))
        ));
    }

    #[test]
    fn every_builtin_parses_with_expected_slots() {
        let set = TemplateSet::builtin();
        assert_eq!(set.get(RoleTag::Partition).slots(), vec!["task", "subgoals", "trajectory"]);
        assert_eq!(
            set.get(RoleTag::Executor).slots(),
            vec!["task", "notes", "memory", "observation", "trajectory", "subgoal", "subgoal_steps", "last_observation"]
        );
    }

    #[test]
    fn load_dir_overrides_single_role() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("reflexion.txt"), "why did {{task}} fail").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.render(RoleTag::Reflexion, &[("task", "t")]).unwrap(), "why did t fail");
        assert_eq!(set.get(RoleTag::Planner), TemplateSet::builtin().get(RoleTag::Planner));
    }
}
