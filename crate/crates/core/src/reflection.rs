//! Hierarchical hindsight reflection: turns (success, failure) trajectory
//! pairs into a high-level and a low-level memory component.
//!
//! Per pair the pipeline infers the realized subgoals, revises the planning
//! insight store, splits the success into one sub-trajectory per subgoal and
//! revises the execution insight store once per subgoal. A final grounding
//! pass attaches the relevant subset of each store to every unit.

use std::fmt;
use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Encoder, Scalar};
use crate::insight::{InsightId, InsightStore};
use crate::llm::{BackendError, CompletionRequest, LanguageModel, RoleTag, TemplateError, TemplateSet};
use crate::memory::{HighLevelUnit, Level, LowLevelUnit, MemoryComponent, MemoryError};
use crate::types::{
    render_steps, render_steps_indexed, render_trajectory, validate_partition, Step, SubTrajectorySpan, Subgoal,
    SubgoalSequence, Task, Trajectory,
};

/// Re-prompts allowed after the first malformed answer.
pub const VALIDATION_RETRIES: usize = 2;

/// A solved training task with its latest failed attempt, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperiencePair {
    pub task: Task,
    pub positive: Trajectory,
    pub negative: Option<Trajectory>,
}

impl ExperiencePair {
    pub fn new(task: Task, positive: Trajectory, negative: Option<Trajectory>) -> Result<Self, ReflectionError> {
        let pair = Self {
            task,
            positive,
            negative,
        };
        pair.check()?;
        Ok(pair)
    }

    fn check(&self) -> Result<(), ReflectionError> {
        if !self.positive.outcome.is_success() {
            return Err(ReflectionError::InvalidPair("positive trajectory did not succeed".into()));
        }
        if self.positive.is_empty() {
            return Err(ReflectionError::InvalidPair("positive trajectory is empty".into()));
        }
        if self.negative.as_ref().is_some_and(|n| n.outcome.is_success()) {
            return Err(ReflectionError::InvalidPair("negative trajectory succeeded".into()));
        }
        Ok(())
    }
}

pub const EXPERIENCES_SCHEMA: &str = "h2r-exp-v1";
pub const EXPERIENCES_FILE: &str = "experiences.v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExperienceFileError {
    #[error("expected schema {EXPERIENCES_SCHEMA}, found header {0:?}")]
    SchemaMismatch(String),
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
}

/// Header `h2r-exp-v1 env=<name>` then one JSON pair per line.
pub fn experiences_to_string(env: &str, pairs: &[ExperiencePair]) -> String {
    let mut out = format!("{EXPERIENCES_SCHEMA} env={env}\n");
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("pair serializes"));
        out.push('\n');
    }
    out
}

/// Returns the env name from the header and the pairs.
pub fn experiences_from_str(text: &str) -> Result<(String, Vec<ExperiencePair>), ExperienceFileError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let env = header
        .strip_prefix(EXPERIENCES_SCHEMA)
        .and_then(|rest| rest.trim().strip_prefix("env="))
        .ok_or_else(|| ExperienceFileError::SchemaMismatch(header.to_string()))?;
    let mut pairs = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: ExperiencePair = serde_json::from_str(line).map_err(|e| ExperienceFileError::MalformedRecord {
            line: i + 2,
            message: e.to_string(),
        })?;
        pairs.push(pair);
    }
    Ok((env.to_string(), pairs))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReflectionReport {
    pub pairs_processed: usize,
    pub pairs_skipped: usize,
    pub high_units_built: usize,
    pub low_units_built: usize,
    pub model_calls: usize,
    pub validation_retries: usize,
    pub high_insights: usize,
    pub low_insights: usize,
}

impl ReflectionReport {
    /// `key=value` per line.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ReflectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs_processed={}", self.pairs_processed)?;
        writeln!(f, "pairs_skipped={}", self.pairs_skipped)?;
        writeln!(f, "high_units_built={}", self.high_units_built)?;
        writeln!(f, "low_units_built={}", self.low_units_built)?;
        writeln!(f, "model_calls={}", self.model_calls)?;
        writeln!(f, "validation_retries={}", self.validation_retries)?;
        writeln!(f, "high_insights={}", self.high_insights)?;
        writeln!(f, "low_insights={}", self.low_insights)
    }
}

#[derive(Debug, Error)]
pub enum ReflectionError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{role} output still malformed after {attempts} attempts: {reason}")]
    Malformed {
        role: RoleTag,
        attempts: usize,
        reason: String,
    },
    #[error("only successful trajectories can be partitioned")]
    NotSuccess,
    #[error("invalid experience pair: {0}")]
    InvalidPair(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Everything one reflection run produces.
#[derive(Debug)]
pub struct Reflection<T: Scalar = f64> {
    pub high: MemoryComponent<T>,
    pub low: MemoryComponent<T>,
    pub high_insights: InsightStore,
    pub low_insights: InsightStore,
    pub report: ReflectionReport,
}

/// Prompts the model for each reflection step and keeps call counters.
pub struct Reflector<'a> {
    model: &'a dyn LanguageModel,
    templates: &'a TemplateSet,
    pub model_calls: usize,
    pub validation_retries: usize,
}

fn or_none(s: &str) -> &str {
    if s.is_empty() {
        "(none)"
    } else {
        s
    }
}

impl<'a> Reflector<'a> {
    pub fn new(model: &'a dyn LanguageModel, templates: &'a TemplateSet) -> Self {
        Self {
            model,
            templates,
            model_calls: 0,
            validation_retries: 0,
        }
    }

    /// Sends `prompt`, re-prompting with the parse error appended until
    /// `parse` accepts or the retry budget runs out.
    fn ask<T>(
        &mut self,
        role: RoleTag,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, ReflectionError> {
        let mut reason = String::new();
        for attempt in 0..=VALIDATION_RETRIES {
            let text = if attempt == 0 {
                prompt.to_string()
            } else {
                self.validation_retries += 1;
                format!("{prompt}\nYour previous answer was rejected: {reason}\nAnswer again in the required format.\n")
            };
            self.model_calls += 1;
            let reply = self.model.complete(&CompletionRequest::new(role, text))?;
            match parse(&reply) {
                Ok(v) => return Ok(v),
                Err(r) => {
                    debug!("{role} answer rejected on attempt {}: {r}", attempt + 1);
                    reason = r;
                }
            }
        }
        Err(ReflectionError::Malformed {
            role,
            attempts: VALIDATION_RETRIES + 1,
            reason,
        })
    }

    pub fn infer_subgoals(&mut self, task: &Task, traj: &Trajectory) -> Result<SubgoalSequence, ReflectionError> {
        if traj.is_empty() {
            return Err(ReflectionError::InvalidPair("cannot infer subgoals of an empty trajectory".into()));
        }
        let trajectory = render_trajectory(traj);
        let prompt = self.templates.render(
            RoleTag::SubgoalInference,
            &[("task", &task.description), ("trajectory", &trajectory)],
        )?;
        self.ask(RoleTag::SubgoalInference, &prompt, parse_subgoals)
    }

    pub fn partition_trajectory(
        &mut self,
        task: &Task,
        traj: &Trajectory,
        subgoals: &SubgoalSequence,
    ) -> Result<Vec<SubTrajectorySpan>, ReflectionError> {
        if !traj.outcome.is_success() {
            return Err(ReflectionError::NotSuccess);
        }
        let rendered_goals = subgoals.render_numbered();
        let trajectory = render_steps_indexed(&traj.steps);
        let prompt = self.templates.render(
            RoleTag::Partition,
            &[("task", &task.description), ("subgoals", &rendered_goals), ("trajectory", &trajectory)],
        )?;
        self.ask(RoleTag::Partition, &prompt, |out| parse_partition(out, traj, subgoals))
    }

    pub fn update_high_insights(
        &mut self,
        task: &Task,
        positive: &Trajectory,
        negative: Option<(&Trajectory, Option<&SubgoalSequence>)>,
        g_pos: &SubgoalSequence,
        store: &mut InsightStore,
    ) -> Result<(), ReflectionError> {
        let failure_section = match negative {
            None => String::new(),
            Some((traj, goals)) => format!(
                "Failed attempt subgoals:\n{}\nFailed attempt trajectory:\n{}",
                goals.map_or_else(|| "(unknown)".to_string(), SubgoalSequence::render_numbered),
                render_trajectory(traj)
            ),
        };
        let success_subgoals = g_pos.render_numbered();
        let success_trajectory = render_trajectory(positive);
        let insights = store.render_numbered();
        let prompt = self.templates.render(
            RoleTag::HighInsight,
            &[
                ("task", &task.description),
                ("success_subgoals", &success_subgoals),
                ("success_trajectory", &success_trajectory),
                ("failure_section", &failure_section),
                ("insights", or_none(&insights)),
            ],
        )?;
        self.revise(RoleTag::HighInsight, &prompt, store)
    }

    pub fn update_low_insights(
        &mut self,
        subgoal: &Subgoal,
        sub_trajectory: &[Step],
        negative: Option<&Trajectory>,
        store: &mut InsightStore,
    ) -> Result<(), ReflectionError> {
        let failure_section = negative
            .map(|t| format!("Failed attempt trajectory:\n{}", render_trajectory(t)))
            .unwrap_or_default();
        let success_trajectory = render_steps(sub_trajectory);
        let insights = store.render_numbered();
        let prompt = self.templates.render(
            RoleTag::LowInsight,
            &[
                ("subgoal", subgoal.as_str()),
                ("success_trajectory", &success_trajectory),
                ("failure_section", &failure_section),
                ("insights", or_none(&insights)),
            ],
        )?;
        self.revise(RoleTag::LowInsight, &prompt, store)
    }

    fn revise(&mut self, role: RoleTag, prompt: &str, store: &mut InsightStore) -> Result<(), ReflectionError> {
        let edits = self.ask(role, prompt, |out| store.parse_edits(out).map_err(|e| e.to_string()))?;
        for edit in edits {
            match store.apply_edit(edit) {
                Ok(outcome) => debug!("{role} edit applied: {outcome:?}"),
                Err(e) => warn!("{role} edit rejected: {e}"),
            }
        }
        Ok(())
    }

    /// Asks which stored insights apply to a unit. Falls back to none when
    /// the model never answers in format.
    pub fn ground_insights(
        &mut self,
        level: Level,
        unit_context: &str,
        store: &InsightStore,
    ) -> Result<Vec<InsightId>, ReflectionError> {
        let insights = store.render_numbered();
        let prompt = self.templates.render(
            RoleTag::Grounding,
            &[("level", level.as_str()), ("context", unit_context), ("insights", or_none(&insights))],
        )?;
        let ordinals = store.ordinal_ids();
        match self.ask(RoleTag::Grounding, &prompt, |out| parse_keep(out, &ordinals)) {
            Ok(ids) => Ok(ids),
            Err(ReflectionError::Malformed { reason, .. }) => {
                warn!("grounding answer unusable ({reason}); attaching no insights");
                Ok(Vec::new())
            }
            Err(e) => Err(e),
        }
    }
}

/// "1. first\n2. second" into a sequence; numbering must run from 1.
pub fn parse_subgoals(output: &str) -> Result<SubgoalSequence, String> {
    let mut goals = Vec::new();
    for line in output.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let expected = goals.len() + 1;
        let (num, text) = line
            .split_once('.')
            .ok_or_else(|| format!("line {line:?} is not numbered"))?;
        if num.trim().parse::<usize>().ok() != Some(expected) {
            return Err(format!("expected item {expected}, found {line:?}"));
        }
        goals.push(Subgoal::new(text).map_err(|e| e.to_string())?);
    }
    SubgoalSequence::new(goals).map_err(|e| e.to_string())
}

/// "g1: steps 0-3" lines into validated spans.
pub fn parse_partition(
    output: &str,
    traj: &Trajectory,
    subgoals: &SubgoalSequence,
) -> Result<Vec<SubTrajectorySpan>, String> {
    let mut spans = Vec::new();
    for line in output.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let bad = || format!("line {line:?} is not of the form \"g<j>: steps <a>-<b>\"");
        let (label, range) = line.split_once(':').ok_or_else(bad)?;
        let j: usize = label.trim().strip_prefix('g').and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        if j == 0 {
            return Err(bad());
        }
        let range = range.trim().strip_prefix("steps").ok_or_else(bad)?.trim();
        let (a, b) = range.split_once('-').ok_or_else(bad)?;
        let start = a.trim().parse().map_err(|_| bad())?;
        let end = b.trim().parse().map_err(|_| bad())?;
        spans.push(SubTrajectorySpan::new(j - 1, start, end));
    }
    validate_partition(traj, &spans, subgoals).map_err(|v| v.to_string())?;
    Ok(spans)
}

/// "KEEP 1,3" into the ids at those ordinals. Repeats are dropped.
pub fn parse_keep(output: &str, ordinals: &[InsightId]) -> Result<Vec<InsightId>, String> {
    let mut lines = output.lines().map(str::trim).filter(|l| !l.is_empty());
    let line = lines.next().ok_or("empty answer")?;
    if lines.next().is_some() {
        return Err("expected a single KEEP line".into());
    }
    let rest = line.strip_prefix("KEEP").ok_or_else(|| format!("{line:?} does not start with KEEP"))?;
    let mut ids = Vec::new();
    for tok in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let n: usize = tok.parse().map_err(|_| format!("{tok:?} is not a number"))?;
        if n == 0 || n > ordinals.len() {
            return Err(format!("insight {n} does not exist"));
        }
        let id = ordinals[n - 1];
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    Ok(ids)
}

fn high_context(unit: &HighLevelUnit) -> String {
    format!("task: {}\nsubgoals:\n{}", unit.task_description, unit.subgoal_sequence.render_numbered())
}

fn low_context(unit: &LowLevelUnit) -> String {
    format!("subgoal: {}\nsteps:\n{}", unit.subgoal, render_steps(&unit.sub_trajectory))
}

fn texts_for(store: &InsightStore, ids: &[InsightId]) -> Vec<String> {
    ids.iter()
        .filter_map(|id| store.get(*id).map(|i| i.text.clone()))
        .collect()
}

/// Builds both memory components from `experiences`, processing pairs in
/// order. Malformed model output skips the affected pair; backend failures
/// abort the run.
pub fn run_h2r<T: Scalar>(
    model: &dyn LanguageModel,
    templates: &TemplateSet,
    encoder: Arc<dyn Encoder<T>>,
    experiences: &[ExperiencePair],
) -> Result<Reflection<T>, ReflectionError> {
    let mut r = Reflector::new(model, templates);
    let mut high = MemoryComponent::new(Level::High, encoder.clone());
    let mut low = MemoryComponent::new(Level::Low, encoder);
    let mut high_store = InsightStore::default();
    let mut low_store = InsightStore::default();
    let mut report = ReflectionReport::default();

    for (n, pair) in experiences.iter().enumerate() {
        if let Err(e) = pair.check() {
            warn!("skipping pair {n} ({}): {e}", pair.task.id);
            report.pairs_skipped += 1;
            continue;
        }
        let skip = |report: &mut ReflectionReport, e: ReflectionError| -> Result<(), ReflectionError> {
            match e {
                ReflectionError::Malformed { .. } => {
                    warn!("skipping pair {n} ({}): {e}", pair.task.id);
                    report.pairs_skipped += 1;
                    Ok(())
                }
                other => Err(other),
            }
        };
        let g_pos = match r.infer_subgoals(&pair.task, &pair.positive) {
            Ok(g) => g,
            Err(e) => {
                skip(&mut report, e)?;
                continue;
            }
        };
        let g_neg = match pair.negative.as_ref().filter(|t| !t.is_empty()) {
            Some(neg) => match r.infer_subgoals(&pair.task, neg) {
                Ok(g) => Some(g),
                Err(ReflectionError::Malformed { reason, .. }) => {
                    warn!("no subgoals for the failed attempt of {}: {reason}", pair.task.id);
                    None
                }
                Err(e) => return Err(e),
            },
            None => None,
        };
        let negative = pair.negative.as_ref().map(|t| (t, g_neg.as_ref()));
        if let Err(e) = r.update_high_insights(&pair.task, &pair.positive, negative, &g_pos, &mut high_store) {
            skip(&mut report, e)?;
            continue;
        }
        // the high unit is only committed once its partition is known good
        let spans = match r.partition_trajectory(&pair.task, &pair.positive, &g_pos) {
            Ok(s) => s,
            Err(e) => {
                skip(&mut report, e)?;
                continue;
            }
        };
        high.insert(HighLevelUnit::placeholder(pair.task.description.clone(), g_pos.clone()))?;
        report.high_units_built += 1;
        for (goal, span) in g_pos.iter().zip(&spans) {
            let slice = pair.positive.slice(span);
            match r.update_low_insights(goal, slice, pair.negative.as_ref(), &mut low_store) {
                Ok(()) => {}
                Err(ReflectionError::Malformed { reason, .. }) => {
                    warn!("low-level insights for {goal:?} left unchanged: {reason}")
                }
                Err(e) => return Err(e),
            }
            low.insert(LowLevelUnit::placeholder(goal.clone(), slice.to_vec()))?;
            report.low_units_built += 1;
        }
        report.pairs_processed += 1;
    }

    if !high_store.is_empty() {
        let contexts: Vec<(u64, String)> = high.high_units().map(|u| (u.id, high_context(u))).collect();
        for (id, ctx) in contexts {
            let ids = r.ground_insights(Level::High, &ctx, &high_store)?;
            let texts = texts_for(&high_store, &ids);
            high.attach_insights(id, ids, texts)?;
        }
    }
    if !low_store.is_empty() {
        let contexts: Vec<(u64, String)> = low.low_units().map(|u| (u.id, low_context(u))).collect();
        for (id, ctx) in contexts {
            let ids = r.ground_insights(Level::Low, &ctx, &low_store)?;
            let texts = texts_for(&low_store, &ids);
            low.attach_insights(id, ids, texts)?;
        }
    }

    report.model_calls = r.model_calls;
    report.validation_retries = r.validation_retries;
    report.high_insights = high_store.len();
    report.low_insights = low_store.len();
    Ok(Reflection {
        high,
        low,
        high_insights: high_store,
        low_insights: low_store,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEncoder;
    use crate::llm::{ScriptEntry, ScriptedBackend};
    use crate::types::{Outcome, Split, TaskType};

    fn enc() -> Arc<dyn Encoder<f64>> {
        Arc::new(HashingEncoder::default())
    }

    fn task() -> Task {
        Task::new("t0", "clean a pan and place it on the countertop", TaskType::PickCleanThenPlace, Split::Train).unwrap()
    }

    fn success(n: usize) -> Trajectory {
        let mut t = Trajectory::new("t0");
        for i in 0..n {
            t.push(format!("act {i}"), format!("obs {i}"));
        }
        t.outcome = Outcome::Success;
        t
    }

    fn backend(entries: &[(RoleTag, &str, &str)]) -> ScriptedBackend {
        ScriptedBackend::new(entries.iter().map(|(r, k, v)| ScriptEntry::new(*r, *k, *v)).collect()).unwrap()
    }

    #[test]
    fn parses_numbered_subgoals() {
        let g = parse_subgoals("1. the pan is clean\n2. the pan is on the countertop").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.as_slice()[1].as_str(), "the pan is on the countertop");
        assert!(g.as_slice().last().unwrap().as_str().contains("countertop"));
        assert!(parse_subgoals("").is_err());
        assert!(parse_subgoals("2. skipped one").is_err());
        assert!(parse_subgoals("the pan is clean").is_err());
    }

    #[test]
    fn parses_partitions() {
        let traj = success(4);
        let g = parse_subgoals("1. a\n2. b").unwrap();
        assert_eq!(
            parse_partition("g1: steps 0-1\ng2: steps 2-3", &traj, &g).unwrap(),
            vec![SubTrajectorySpan::new(0, 0, 1), SubTrajectorySpan::new(1, 2, 3)]
        );
        let err = parse_partition("g1: steps 0-2\ng2: steps 2-3", &traj, &g).unwrap_err();
        assert!(err.contains("overlap at step 2"), "{err}");
        let one = parse_subgoals("1. a").unwrap();
        assert!(parse_partition("g1: steps 0-3", &traj, &one).is_ok());
        assert!(parse_partition("g1: steps 0-2", &traj, &one).is_err());
        assert!(parse_partition("g1: 0-3", &traj, &one).is_err());
    }

    #[test]
    fn parses_keep() {
        let ids = [10, 11, 12];
        assert_eq!(parse_keep("KEEP 1,3", &ids).unwrap(), vec![10, 12]);
        assert_eq!(parse_keep("KEEP", &ids).unwrap(), Vec::<u64>::new());
        assert_eq!(parse_keep("KEEP 2, 2", &ids).unwrap(), vec![11]);
        assert!(parse_keep("KEEP 4", &ids).is_err());
        assert!(parse_keep("maybe 1", &ids).is_err());
    }

    #[test]
    fn empty_subgoal_answer_exhausts_retries() {
        let b = backend(&[(RoleTag::SubgoalInference, "Task:", "")]);
        let templates = TemplateSet::builtin();
        let mut r = Reflector::new(&b, &templates);
        let err = r.infer_subgoals(&task(), &success(2)).unwrap_err();
        assert!(matches!(err, ReflectionError::Malformed { attempts: 3, .. }));
        assert_eq!(b.calls(), 3);
        assert_eq!(r.validation_retries, 2);
    }

    #[test]
    fn insight_updates_apply_edits() {
        let templates = TemplateSet::builtin();
        let mut store = InsightStore::default();
        let g = parse_subgoals("1. the pan is clean").unwrap();
        let b = backend(&[(RoleTag::HighInsight, "Task:", "ADD plan cleaning before placement")]);
        let mut r = Reflector::new(&b, &templates);
        r.update_high_insights(&task(), &success(2), None, &g, &mut store).unwrap();
        assert_eq!(store.len(), 1);
        let prompt = &b.history()[0].0.prompt;
        assert!(!prompt.contains("Failed attempt"));

        let b = backend(&[(RoleTag::HighInsight, "Task:", "UPVOTE 1")]);
        let mut r = Reflector::new(&b, &templates);
        let mut neg = success(1);
        neg.outcome = Outcome::Failure;
        r.update_high_insights(&task(), &success(2), Some((&neg, None)), &g, &mut store).unwrap();
        assert_eq!(store.insights()[0].importance, 3);
        assert!(b.history()[0].0.prompt.contains("Failed attempt trajectory:"));

        let b = backend(&[(RoleTag::LowInsight, "Subgoal:", "ADD plan cleaning before placement")]);
        let mut r = Reflector::new(&b, &templates);
        let mut low = InsightStore::default();
        low.apply_edit(crate::insight::InsightEdit::Add {
            text: "plan cleaning before placement".into(),
        })
        .unwrap();
        let before = low.clone();
        r.update_low_insights(&g.as_slice()[0], &success(1).steps, None, &mut low).unwrap();
        assert_eq!(low, before);
    }

    #[test]
    fn garbage_insight_answer_skips_pair() {
        let templates = TemplateSet::builtin();
        let b = backend(&[
            (RoleTag::SubgoalInference, "Task:", "1. the pan is clean"),
            (RoleTag::HighInsight, "Task:", "??"),
        ]);
        let pair = ExperiencePair::new(task(), success(3), None).unwrap();
        let out = run_h2r(&b, &templates, enc(), &[pair]).unwrap();
        assert_eq!(out.report.pairs_skipped, 1);
        assert_eq!(out.report.validation_retries, 2);
        assert!(out.high.is_empty() && out.low.is_empty());
    }

    #[test]
    fn grounding_falls_back_to_nothing() {
        let templates = TemplateSet::builtin();
        let b = backend(&[(RoleTag::Grounding, "Memory unit:", "I like all of them")]);
        let mut store = InsightStore::default();
        store.apply_edit(crate::insight::InsightEdit::Add { text: "x".into() }).unwrap();
        let mut r = Reflector::new(&b, &templates);
        assert!(r.ground_insights(Level::High, "task: t", &store).unwrap().is_empty());
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn single_pair_builds_one_high_and_two_low_units() {
        let templates = TemplateSet::builtin();
        let b = backend(&[
            (RoleTag::SubgoalInference, "Task:", "1. the pan is clean\n2. the pan is on the countertop"),
            (RoleTag::HighInsight, "Task:", "ADD clean before placing"),
            (RoleTag::Partition, "Task:", "g1: steps 0-1\ng2: steps 2-3"),
            (RoleTag::LowInsight, "Subgoal:", "ADD use the sinkbasin"),
            (RoleTag::Grounding, "Memory unit:", "KEEP 1"),
        ]);
        let pair = ExperiencePair::new(task(), success(4), None).unwrap();
        let out = run_h2r(&b, &templates, enc(), &[pair.clone()]).unwrap();
        assert_eq!(out.high.len(), 1);
        assert_eq!(out.low.len(), 2);
        // 4 per pair + 2 per subgoal, no failed attempt
        assert_eq!(out.report.model_calls, 4 + 2 * 2);
        let lows: Vec<_> = out.low.low_units().collect();
        assert_eq!(lows[0].sub_trajectory, pair.positive.steps[0..2].to_vec());
        assert_eq!(lows[1].sub_trajectory, pair.positive.steps[2..4].to_vec());
        assert_eq!(lows[1].insight_texts, vec!["use the sinkbasin".to_string()]);
        assert_eq!(out.high.high_units().next().unwrap().insight_ids, vec![0]);

        let empty = run_h2r(&b, &templates, enc(), &[]).unwrap();
        assert!(empty.high.is_empty() && empty.low.is_empty());
        assert_eq!(empty.report, ReflectionReport::default());
    }

    #[test]
    fn experiences_file_round_trip() {
        let mut neg = success(1);
        neg.outcome = Outcome::Truncated;
        let pairs = vec![
            ExperiencePair::new(task(), success(3), Some(neg)).unwrap(),
            ExperiencePair::new(task(), success(1), None).unwrap(),
        ];
        let text = experiences_to_string("text_house", &pairs);
        assert_eq!(experiences_from_str(&text).unwrap(), ("text_house".to_string(), pairs));
        assert_eq!(experiences_from_str("h2r-exp-v1 env=x\n").unwrap().1, vec![]);
        assert!(matches!(experiences_from_str("h2r-mem-v1 level=high"), Err(ExperienceFileError::SchemaMismatch(_))));
        assert!(matches!(
            experiences_from_str("h2r-exp-v1 env=x\n{"),
            Err(ExperienceFileError::MalformedRecord { line: 2, .. })
        ));
    }

    #[test]
    fn unsolved_positive_is_rejected() {
        let mut t = success(2);
        t.outcome = Outcome::Failure;
        assert!(ExperiencePair::new(task(), t, None).is_err());
    }
}
