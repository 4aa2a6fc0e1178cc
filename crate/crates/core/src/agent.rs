//! Planner/Executor agent and the training-time experience collector.
//!
//! The Planner turns the task, its planning history and retrieved high-level
//! units into the next subgoal. The Executor turns that subgoal, the
//! trajectory so far and retrieved low-level units into one environment
//! action at a time, or ends the subgoal with `COMPLETE` / `INVALID`.

use log::{debug, info, warn};
use thiserror::Error;

use crate::embedding::Scalar;
use crate::envs::{EnvError, Environment};
use crate::llm::{BackendError, CompletionRequest, LanguageModel, RoleTag, TemplateError, TemplateSet};
use crate::memory::{HighLevelUnit, LowLevelUnit, MemoryComponent, MemoryError, DEFAULT_K};
use crate::reflection::{ExperiencePair, VALIDATION_RETRIES};
use crate::types::{check_observation, render_steps, render_trajectory, Outcome, Subgoal, Task, Trajectory, TypeError};

/// Invalid resolutions in a row that end an episode.
pub const MAX_CONSECUTIVE_INVALID: usize = 3;
pub const DEFAULT_MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The planner is pinned to the task itself.
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Completed,
    Invalid,
}

impl Resolution {
    fn as_str(&self) -> &'static str {
        match self {
            Resolution::Completed => "completed",
            Resolution::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerState {
    pub task: Task,
    pub planning_history: Vec<(Subgoal, Resolution)>,
    pub trajectory: Trajectory,
}

impl PlannerState {
    pub fn render_history(&self) -> String {
        render_history(&self.planning_history)
    }
}

/// "1. subgoal -> completed" per dispatched subgoal, or "(none)".
pub fn render_history(history: &[(Subgoal, Resolution)]) -> String {
    if history.is_empty() {
        return "(none)".into();
    }
    history
        .iter()
        .enumerate()
        .map(|(i, (g, r))| format!("{}. {g} -> {}", i + 1, r.as_str()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannerDecision {
    Subgoal(Subgoal),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutorAction {
    Atomic(String),
    /// a⁺
    Complete,
    /// a⁻
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeResult {
    pub trajectory: Trajectory,
    pub subgoals_dispatched: Vec<Subgoal>,
    pub success: bool,
    pub steps_used: usize,
    pub high_retrievals: usize,
    pub low_retrievals: usize,
    pub model_calls: usize,
    /// Set when the episode ended early on repeated malformed or invalid output.
    pub aborted: Option<String>,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("environment broke the observation contract: {0}")]
    Observation(#[from] TypeError),
}

/// Which memory levels an episode may consult.
pub struct Memories<'m, T: Scalar = f64> {
    pub high: Option<&'m MemoryComponent<T>>,
    pub low: Option<&'m MemoryComponent<T>>,
    pub k_high: usize,
    pub k_low: usize,
}

impl<'m, T: Scalar> Memories<'m, T> {
    pub fn none() -> Self {
        Self {
            high: None,
            low: None,
            k_high: DEFAULT_K,
            k_low: DEFAULT_K,
        }
    }

    pub fn both(high: &'m MemoryComponent<T>, low: &'m MemoryComponent<T>) -> Self {
        Self {
            high: Some(high),
            low: Some(low),
            k_high: DEFAULT_K,
            k_low: DEFAULT_K,
        }
    }
}

pub fn parse_planner_output(output: &str) -> Result<PlannerDecision, String> {
    let line = single_line(output)?;
    if line == "DONE" {
        return Ok(PlannerDecision::Done);
    }
    let text = line
        .strip_prefix("SUBGOAL:")
        .ok_or_else(|| format!("expected SUBGOAL: or DONE, got {line:?}"))?;
    Subgoal::new(text).map(PlannerDecision::Subgoal).map_err(|e| e.to_string())
}

pub fn parse_executor_output(output: &str) -> Result<ExecutorAction, String> {
    let line = single_line(output)?;
    match line {
        "COMPLETE" => Ok(ExecutorAction::Complete),
        "INVALID" => Ok(ExecutorAction::Invalid),
        _ => {
            let action = line
                .strip_prefix("ACTION:")
                .map(str::trim)
                .ok_or_else(|| format!("expected ACTION:, COMPLETE or INVALID, got {line:?}"))?;
            if action.is_empty() {
                return Err("ACTION: needs an action".into());
            }
            Ok(ExecutorAction::Atomic(action.to_string()))
        }
    }
}

fn single_line(output: &str) -> Result<&str, String> {
    let mut lines = output.lines().map(str::trim).filter(|l| !l.is_empty());
    let line = lines.next().ok_or("empty answer")?;
    if lines.next().is_some() {
        return Err("expected exactly one line".into());
    }
    Ok(line)
}

fn or_none(s: String) -> String {
    if s.is_empty() {
        "(none)".into()
    } else {
        s
    }
}

fn render_insights(texts: &[String]) -> String {
    if texts.is_empty() {
        return "(none)".into();
    }
    texts.iter().map(|t| format!("- {t}")).collect::<Vec<_>>().join("\n")
}

pub fn render_high_units(units: &[&HighLevelUnit]) -> String {
    let blocks: Vec<String> = units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            format!(
                "[experience {}] task: {}\nsubgoals:\n{}\ninsights:\n{}",
                i + 1,
                u.task_description,
                u.subgoal_sequence.render_numbered(),
                render_insights(&u.insight_texts)
            )
        })
        .collect();
    or_none(blocks.join("\n"))
}

pub fn render_low_units(units: &[&LowLevelUnit]) -> String {
    let blocks: Vec<String> = units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            format!(
                "[experience {}] subgoal: {}\n{}insights:\n{}",
                i + 1,
                u.subgoal,
                render_steps(&u.sub_trajectory),
                render_insights(&u.insight_texts)
            )
        })
        .collect();
    or_none(blocks.join("\n"))
}

/// The Planner/Executor pair over one model.
pub struct Agent<'a> {
    model: &'a dyn LanguageModel,
    templates: &'a TemplateSet,
}

struct Counters {
    model_calls: usize,
    high_retrievals: usize,
    low_retrievals: usize,
}

impl<'a> Agent<'a> {
    pub fn new(model: &'a dyn LanguageModel, templates: &'a TemplateSet) -> Self {
        Self { model, templates }
    }

    fn ask<T>(
        &self,
        role: RoleTag,
        prompt: &str,
        calls: &mut usize,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Result<T, String>, BackendError> {
        let mut reason = String::new();
        for attempt in 0..=VALIDATION_RETRIES {
            let text = if attempt == 0 {
                prompt.to_string()
            } else {
                format!("{prompt}\nYour previous answer was rejected: {reason}\nAnswer again in the required format.\n")
            };
            *calls += 1;
            let reply = self.model.complete(&CompletionRequest::new(role, text))?;
            match parse(&reply) {
                Ok(v) => return Ok(Ok(v)),
                Err(r) => reason = r,
            }
        }
        Ok(Err(reason))
    }

    /// Next subgoal for `state`. `Ok(Err(_))` means the model never answered
    /// in format.
    fn plan_next_subgoal(
        &self,
        state: &PlannerState,
        retrieved: &[&HighLevelUnit],
        mode: Mode,
        initial_observation: &str,
        calls: &mut usize,
    ) -> Result<Result<PlannerDecision, String>, AgentError> {
        if mode == Mode::Train {
            if !state.planning_history.is_empty() {
                return Ok(Ok(PlannerDecision::Done));
            }
            let goal = Subgoal::new(&state.task.description)?;
            return Ok(Ok(PlannerDecision::Subgoal(goal)));
        }
        let history = state.render_history();
        let memory = render_high_units(retrieved);
        let trajectory = or_none(render_trajectory(&state.trajectory));
        let prompt = self.templates.render(
            RoleTag::Planner,
            &[
                ("task", &state.task.description),
                ("history", &history),
                ("memory", &memory),
                ("observation", initial_observation),
                ("trajectory", &trajectory),
            ],
        )?;
        Ok(self.ask(RoleTag::Planner, &prompt, calls, parse_planner_output)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn execute_step(
        &self,
        task: &Task,
        subgoal: &Subgoal,
        trajectory: &Trajectory,
        subgoal_steps: usize,
        retrieved: &[&LowLevelUnit],
        notes: &[String],
        initial_observation: &str,
        calls: &mut usize,
    ) -> Result<Result<ExecutorAction, String>, AgentError> {
        let notes = or_none(
            notes
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{}. {n}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"),
        );
        let memory = render_low_units(retrieved);
        let rendered = or_none(render_trajectory(trajectory));
        let last = trajectory.last_observation().unwrap_or(initial_observation);
        let steps = subgoal_steps.to_string();
        let prompt = self.templates.render(
            RoleTag::Executor,
            &[
                ("task", &task.description),
                ("notes", &notes),
                ("memory", &memory),
                ("observation", initial_observation),
                ("trajectory", &rendered),
                ("subgoal", subgoal.as_str()),
                ("subgoal_steps", &steps),
                ("last_observation", last),
            ],
        )?;
        Ok(self.ask(RoleTag::Executor, &prompt, calls, parse_executor_output)?)
    }

    /// Runs one episode from `env.reset(task, seed)`. Only atomic actions
    /// count against `step_budget`.
    #[allow(clippy::too_many_arguments)]
    pub fn run_episode<T: Scalar>(
        &self,
        env: &mut dyn Environment,
        task: &Task,
        seed: u64,
        memories: &Memories<'_, T>,
        mode: Mode,
        step_budget: usize,
        notes: &[String],
    ) -> Result<EpisodeResult, AgentError> {
        let initial = env.reset(task, seed)?;
        let mut state = PlannerState {
            task: task.clone(),
            planning_history: Vec::new(),
            trajectory: Trajectory::new(task.id.clone()),
        };
        let mut dispatched = Vec::new();
        let mut c = Counters {
            model_calls: 0,
            high_retrievals: 0,
            low_retrievals: 0,
        };
        let mut aborted = None;
        let mut consecutive_invalid = 0;
        let mut success = env.goal_satisfied();

        'episode: while !success {
            if state.trajectory.len() >= step_budget {
                break;
            }
            let high_units = match memories.high {
                Some(m) if mode == Mode::Test => {
                    c.high_retrievals += 1;
                    m.retrieve_high(&task.description, memories.k_high)?
                }
                _ => Vec::new(),
            };
            let subgoal = match self.plan_next_subgoal(&state, &high_units, mode, &initial, &mut c.model_calls)? {
                Ok(PlannerDecision::Subgoal(g)) => g,
                Ok(PlannerDecision::Done) => break,
                Err(reason) => {
                    warn!("planner output malformed for {}: {reason}", task.id);
                    aborted = Some(format!("planner: {reason}"));
                    break;
                }
            };
            debug!("{}: dispatching {subgoal:?}", task.id);
            dispatched.push(subgoal.clone());
            let low_units = match memories.low {
                Some(m) => {
                    c.low_retrievals += 1;
                    m.retrieve_low(subgoal.as_str(), memories.k_low)?
                }
                None => Vec::new(),
            };
            let mut subgoal_steps = 0;
            let resolution = loop {
                if state.trajectory.len() >= step_budget {
                    break 'episode;
                }
                let action = self.execute_step(
                    task,
                    &subgoal,
                    &state.trajectory,
                    subgoal_steps,
                    &low_units,
                    notes,
                    &initial,
                    &mut c.model_calls,
                )?;
                match action {
                    Ok(ExecutorAction::Atomic(a)) => {
                        let out = env.step(&a);
                        check_observation(&out.observation)?;
                        state.trajectory.push(a, out.observation);
                        subgoal_steps += 1;
                        if out.done {
                            success = out.success;
                            break 'episode;
                        }
                    }
                    Ok(ExecutorAction::Complete) => break Resolution::Completed,
                    Ok(ExecutorAction::Invalid) => break Resolution::Invalid,
                    Err(reason) => {
                        debug!("executor output malformed, resolving {subgoal:?} invalid: {reason}");
                        break Resolution::Invalid;
                    }
                }
            };
            state.planning_history.push((subgoal, resolution));
            if resolution == Resolution::Invalid {
                consecutive_invalid += 1;
                if consecutive_invalid >= MAX_CONSECUTIVE_INVALID {
                    aborted = Some(format!("{MAX_CONSECUTIVE_INVALID} invalid subgoals in a row"));
                    break;
                }
            } else {
                consecutive_invalid = 0;
            }
        }

        let mut trajectory = state.trajectory;
        trajectory.outcome = if success {
            Outcome::Success
        } else if trajectory.len() >= step_budget {
            Outcome::Truncated
        } else {
            Outcome::Failure
        };
        Ok(EpisodeResult {
            steps_used: trajectory.len(),
            trajectory,
            subgoals_dispatched: dispatched,
            success,
            high_retrievals: c.high_retrievals,
            low_retrievals: c.low_retrievals,
            model_calls: c.model_calls,
            aborted,
        })
    }

    /// One reflexion call diagnosing a failed attempt.
    pub fn reflexion_note(&self, task: &Task, failed: &Trajectory) -> Result<String, AgentError> {
        let trajectory = render_trajectory(failed);
        let prompt = self.templates.render(
            RoleTag::Reflexion,
            &[("task", &task.description), ("trajectory", &trajectory)],
        )?;
        Ok(self.model.complete(&CompletionRequest::new(RoleTag::Reflexion, prompt))?.trim().to_string())
    }

    /// Runs each training task in train mode, retrying failures with
    /// accumulated reflexion notes, and pairs each success with the latest
    /// failed attempt before it.
    pub fn collect_experiences(
        &self,
        env: &mut dyn Environment,
        tasks: &[Task],
        seed: u64,
        max_retries: usize,
        step_budget: usize,
    ) -> Result<Collection, AgentError> {
        let mut out = Collection::default();
        for task in tasks {
            let mut notes: Vec<String> = Vec::new();
            let mut last_failure: Option<Trajectory> = None;
            let mut solved = false;
            for attempt in 0..=max_retries {
                let result = self.run_episode::<f64>(env, task, seed, &Memories::none(), Mode::Train, step_budget, &notes)?;
                out.attempts += 1;
                out.max_steps_used = out.max_steps_used.max(result.steps_used);
                if result.success {
                    info!("{} solved on attempt {}", task.id, attempt + 1);
                    let pair = ExperiencePair {
                        task: task.clone(),
                        positive: result.trajectory,
                        negative: last_failure.take(),
                    };
                    out.pairs.push(pair);
                    solved = true;
                    break;
                }
                if attempt < max_retries {
                    notes.push(self.reflexion_note(task, &result.trajectory)?);
                }
                last_failure = Some(result.trajectory);
            }
            if !solved {
                warn!("{} never solved in {} attempts", task.id, max_retries + 1);
                out.unsolved.push(task.id.clone());
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Collection {
    pub pairs: Vec<ExperiencePair>,
    /// Ids of training tasks that never succeeded.
    pub unsolved: Vec<String>,
    pub attempts: usize,
    pub max_steps_used: usize,
}
