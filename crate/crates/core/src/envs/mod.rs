//! Deterministic desk-scale environments: a household text world and a
//! two-gripper transport world. Action grammars are documented in
//! `docs/action_grammar.md`.

mod gripper;
mod house;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Task, TaskType, Trajectory};

pub use gripper::{Deliver, GripperWorld};
pub use house::{HouseOp, TextHouse};

/// Suffix of the observation returned by the step that satisfies the goal.
pub const SUCCESS_MESSAGE: &str = "Task completed.";
pub const NOTHING_HAPPENS: &str = "Nothing happens.";
pub const EPISODE_OVER: &str = "The episode is over.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvName {
    TextHouse,
    GripperWorld,
}

impl EnvName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvName::TextHouse => "text_house",
            EnvName::GripperWorld => "gripper_world",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text_house" => Some(EnvName::TextHouse),
            "gripper_world" => Some(EnvName::GripperWorld),
            _ => None,
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSpec {
    pub name: EnvName,
    pub step_budget: usize,
    pub task_types: Vec<TaskType>,
}

impl EnvSpec {
    pub fn text_house() -> Self {
        Self {
            name: EnvName::TextHouse,
            step_budget: 30,
            task_types: TaskType::HOUSEHOLD.to_vec(),
        }
    }

    pub fn gripper_world() -> Self {
        Self {
            name: EnvName::GripperWorld,
            step_budget: 40,
            task_types: vec![TaskType::Gripper],
        }
    }

    pub fn for_name(name: EnvName) -> Self {
        match name {
            EnvName::TextHouse => Self::text_house(),
            EnvName::GripperWorld => Self::gripper_world(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub observation: String,
    pub done: bool,
    pub success: bool,
}

impl StepOutcome {
    fn ongoing(observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            done: false,
            success: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("task type {task_type} is not registered for {env}")]
    UnknownTaskType { env: EnvName, task_type: TaskType },
    #[error("cannot read goal from task description {0:?}")]
    UnparsableTask(String),
    #[error("environment was not reset")]
    NotReset,
    #[error("oracle could not solve {task:?}: {reason}")]
    Unsolvable { task: String, reason: String },
    #[error("cannot generate {requested} distinct {task_type} tasks (at most {available})")]
    TooManyTasks {
        task_type: TaskType,
        requested: usize,
        available: usize,
    },
}

/// A text environment driven one action at a time.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Builds the world for `task` deterministically from `(task, seed)` and
    /// returns the initial observation.
    fn reset(&mut self, task: &Task, seed: u64) -> Result<String, EnvError>;

    /// Applies one action. Unparseable or inapplicable actions yield
    /// [`NOTHING_HAPPENS`] without changing the world.
    fn step(&mut self, action: &str) -> StepOutcome;

    fn goal_satisfied(&self) -> bool;
}

/// Whether an executor takes the precautionary steps a domain requires
/// (opening appliances, unlocking doors).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Care {
    Careful,
    Careless,
}

/// Whether a plan follows the domain's full task structure or the
/// shortcut an uninformed planner tends to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStyle {
    Informed,
    Naive,
}

/// A subgoal with the structured operation behind its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedSubgoal<Op> {
    pub text: String,
    pub op: Op,
}

/// Environments with a built-in hand-written planner, used to produce oracle
/// trajectories and scripted fixtures.
pub trait Solvable: Environment + Clone {
    type Op: Clone + fmt::Debug;

    /// Subgoal decomposition for the current task, from the reset state.
    fn plan(&self, style: PlanStyle) -> Vec<PlannedSubgoal<Self::Op>>;

    /// Actions achieving `op` from the current state, assuming each succeeds.
    fn actions_for(&self, op: &Self::Op, care: Care) -> Vec<String>;
}

pub fn make_env(name: EnvName) -> Box<dyn Environment> {
    match name {
        EnvName::TextHouse => Box::new(TextHouse::new()),
        EnvName::GripperWorld => Box::new(GripperWorld::new()),
    }
}

/// Deterministic train/test task lists. Types cycle within each split and
/// no description appears twice across both splits.
pub fn generate_tasks(spec: &EnvSpec, seed: u64, n_train: usize, n_test: usize) -> Result<(Vec<Task>, Vec<Task>), EnvError> {
    match spec.name {
        EnvName::TextHouse => house::generate_tasks(seed, n_train, n_test),
        EnvName::GripperWorld => gripper::generate_tasks(seed, n_train, n_test),
    }
}

/// Runs an informed, careful plan and returns the successful trajectory.
pub fn oracle_solve(spec: &EnvSpec, task: &Task, seed: u64) -> Result<Trajectory, EnvError> {
    match spec.name {
        EnvName::TextHouse => solve_with(TextHouse::new(), task, seed),
        EnvName::GripperWorld => solve_with(GripperWorld::new(), task, seed),
    }
}

fn solve_with<E: Solvable>(mut env: E, task: &Task, seed: u64) -> Result<Trajectory, EnvError> {
    env.reset(task, seed)?;
    let mut traj = Trajectory::new(task.id.clone());
    let unsolvable = |reason: String| EnvError::Unsolvable {
        task: task.description.clone(),
        reason,
    };
    for sg in env.plan(PlanStyle::Informed) {
        for action in env.actions_for(&sg.op, Care::Careful) {
            let out = env.step(&action);
            traj.push(action, out.observation);
            if out.done {
                if out.success {
                    traj.outcome = crate::types::Outcome::Success;
                    return Ok(traj);
                }
                return Err(unsolvable("episode ended without success".into()));
            }
        }
    }
    Err(unsolvable(format!("plan finished after {} steps without reaching the goal", traj.len())))
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// World RNG seed mixing the episode seed with the task text.
pub(crate) fn world_seed(task: &Task, seed: u64) -> u64 {
    fnv1a64(task.description.as_bytes()) ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// "a, b, and c" / "a and b" / "a".
pub(crate) fn join_list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        2 => format!("{} and {}", items[0], items[1]),
        n => format!("{}, and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}
