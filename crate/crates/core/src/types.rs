//! Trajectory, task and subgoal data model shared by every stage of the
//! pipeline, plus the canonical text rendering used inside prompts.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Line prefix reserved for actions in rendered trajectories.
pub const ACTION_PREFIX: &str = "> ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    PickAndPlace,
    PickCleanThenPlace,
    PickHeatThenPlace,
    PickCoolThenPlace,
    LookAtObj,
    PickTwoObj,
    Gripper,
}

impl TaskType {
    pub const HOUSEHOLD: [TaskType; 6] = [
        TaskType::PickAndPlace,
        TaskType::PickCleanThenPlace,
        TaskType::PickHeatThenPlace,
        TaskType::PickCoolThenPlace,
        TaskType::LookAtObj,
        TaskType::PickTwoObj,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskType::PickAndPlace => "pick_and_place",
            TaskType::PickCleanThenPlace => "pick_clean_then_place",
            TaskType::PickHeatThenPlace => "pick_heat_then_place",
            TaskType::PickCoolThenPlace => "pick_cool_then_place",
            TaskType::LookAtObj => "look_at_obj",
            TaskType::PickTwoObj => "pick_two_obj",
            TaskType::Gripper => "gripper",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TaskType::HOUSEHOLD
            .iter()
            .chain(std::iter::once(&TaskType::Gripper))
            .copied()
            .find(|t| t.as_str() == s)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("task description must not be empty")]
    EmptyDescription,
    #[error("subgoal text must not be empty")]
    EmptySubgoal,
    #[error("subgoal text must be a single line: {0:?}")]
    MultilineSubgoal(String),
    #[error("subgoal sequence must not be empty")]
    EmptySubgoalSequence,
    #[error("observation uses the reserved action prefix: {0:?}")]
    ReservedPrefix(String),
    #[error("step {found} is out of order (expected index {expected})")]
    StepIndex { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub description: String,
    pub task_type: TaskType,
    pub split: Split,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        task_type: TaskType,
        split: Split,
    ) -> Result<Self, TypeError> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(TypeError::EmptyDescription);
        }
        Ok(Self {
            id: id.into(),
            description,
            task_type,
            split,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub action: String,
    pub observation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Truncated,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self == Outcome::Success
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            steps: Vec::new(),
            outcome: Outcome::Failure,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Appends a step with the next contiguous index.
    pub fn push(&mut self, action: impl Into<String>, observation: impl Into<String>) {
        let index = self.steps.len();
        self.steps.push(Step {
            index,
            action: action.into(),
            observation: observation.into(),
        });
    }

    pub fn last_observation(&self) -> Option<&str> {
        self.steps.last().map(|s| s.observation.as_str())
    }

    /// Checks index contiguity and the reserved observation prefix.
    pub fn validate(&self) -> Result<(), TypeError> {
        for (expected, step) in self.steps.iter().enumerate() {
            if step.index != expected {
                return Err(TypeError::StepIndex {
                    expected,
                    found: step.index,
                });
            }
            check_observation(&step.observation)?;
        }
        Ok(())
    }

    /// Returns the steps covered by an inclusive span.
    pub fn slice(&self, span: &SubTrajectorySpan) -> &[Step] {
        &self.steps[span.start..=span.end]
    }
}

/// Rejects observations that would make a rendered trajectory ambiguous.
pub fn check_observation(observation: &str) -> Result<(), TypeError> {
    if observation
        .split('\n')
        .any(|line| line.starts_with(ACTION_PREFIX))
    {
        return Err(TypeError::ReservedPrefix(observation.to_string()));
    }
    Ok(())
}

/// A single-line natural-language condition. Stored trimmed, so equality is
/// case-sensitive comparison after whitespace trimming.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Subgoal(String);

impl Subgoal {
    pub fn new(text: impl AsRef<str>) -> Result<Self, TypeError> {
        let trimmed = text.as_ref().trim();
        if trimmed.is_empty() {
            return Err(TypeError::EmptySubgoal);
        }
        if trimmed.contains(['\n', '\r']) {
            return Err(TypeError::MultilineSubgoal(trimmed.to_string()));
        }
        Ok(Self(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Subgoal {
    type Error = TypeError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Subgoal::new(value)
    }
}

impl From<Subgoal> for String {
    fn from(value: Subgoal) -> Self {
        value.0
    }
}

impl fmt::Display for Subgoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Subgoal>", into = "Vec<Subgoal>")]
pub struct SubgoalSequence(Vec<Subgoal>);

impl SubgoalSequence {
    pub fn new(subgoals: Vec<Subgoal>) -> Result<Self, TypeError> {
        if subgoals.is_empty() {
            return Err(TypeError::EmptySubgoalSequence);
        }
        Ok(Self(subgoals))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Subgoal> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Subgoal] {
        &self.0
    }

    /// "1. first\n2. second" without a trailing newline.
    pub fn render_numbered(&self) -> String {
        self.0
            .iter()
            .enumerate()
            .map(|(i, g)| format!("{}. {}", i + 1, g))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl TryFrom<Vec<Subgoal>> for SubgoalSequence {
    type Error = TypeError;
    fn try_from(value: Vec<Subgoal>) -> Result<Self, Self::Error> {
        SubgoalSequence::new(value)
    }
}

impl From<SubgoalSequence> for Vec<Subgoal> {
    fn from(value: SubgoalSequence) -> Self {
        value.0
    }
}

impl<'a> IntoIterator for &'a SubgoalSequence {
    type Item = &'a Subgoal;
    type IntoIter = std::slice::Iter<'a, Subgoal>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Inclusive step range realizing one subgoal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTrajectorySpan {
    pub subgoal_index: usize,
    pub start: usize,
    pub end: usize,
}

impl SubTrajectorySpan {
    pub fn new(subgoal_index: usize, start: usize, end: usize) -> Self {
        Self {
            subgoal_index,
            start,
            end,
        }
    }
}

/// First rule a candidate partition breaks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionViolation {
    #[error("count mismatch: {spans} spans for {subgoals} subgoals")]
    CountMismatch { spans: usize, subgoals: usize },
    #[error("empty trajectory cannot be partitioned")]
    EmptyTrajectory,
    #[error("span {position} is labelled for subgoal {subgoal_index}")]
    OutOfOrder {
        position: usize,
        subgoal_index: usize,
    },
    #[error("span {position} is inverted ({start}-{end})")]
    Inverted {
        position: usize,
        start: usize,
        end: usize,
    },
    #[error("overlap at step {step}")]
    Overlap { step: usize },
    #[error("gap at step {step}")]
    Gap { step: usize },
    #[error("span {position} ends at step {end} beyond the last step {last}")]
    OutOfRange {
        position: usize,
        end: usize,
        last: usize,
    },
    #[error("steps {from}-{last} are not covered")]
    Uncovered { from: usize, last: usize },
}

/// Accepts exactly the partitions whose spans are labelled in order, are
/// non-inverted, contiguous, non-overlapping, cover every step, and number
/// one per subgoal.
pub fn validate_partition(
    traj: &Trajectory,
    spans: &[SubTrajectorySpan],
    subgoals: &SubgoalSequence,
) -> Result<(), PartitionViolation> {
    if spans.len() != subgoals.len() {
        return Err(PartitionViolation::CountMismatch {
            spans: spans.len(),
            subgoals: subgoals.len(),
        });
    }
    if traj.is_empty() {
        return Err(PartitionViolation::EmptyTrajectory);
    }
    let last = traj.len() - 1;
    let mut next = 0usize;
    for (position, span) in spans.iter().enumerate() {
        if span.subgoal_index != position {
            return Err(PartitionViolation::OutOfOrder {
                position,
                subgoal_index: span.subgoal_index,
            });
        }
        if span.start > span.end {
            return Err(PartitionViolation::Inverted {
                position,
                start: span.start,
                end: span.end,
            });
        }
        if span.start < next {
            return Err(PartitionViolation::Overlap { step: span.start });
        }
        if span.start > next {
            return Err(PartitionViolation::Gap { step: next });
        }
        if span.end > last {
            return Err(PartitionViolation::OutOfRange {
                position,
                end: span.end,
                last,
            });
        }
        next = span.end + 1;
    }
    if next <= last {
        return Err(PartitionViolation::Uncovered { from: next, last });
    }
    Ok(())
}

/// Canonical prompt serialization: `> {action}\n{observation}\n` per step.
pub fn render_trajectory(traj: &Trajectory) -> String {
    render_steps(&traj.steps)
}

pub fn render_steps(steps: &[Step]) -> String {
    let mut out = String::new();
    for step in steps {
        out.push_str(ACTION_PREFIX);
        out.push_str(&step.action);
        out.push('\n');
        out.push_str(&step.observation);
        out.push('\n');
    }
    out
}

/// Like [`render_steps`] but tags each action with its step index, for
/// prompts that ask the model to refer to steps by number.
pub fn render_steps_indexed(steps: &[Step]) -> String {
    let mut out = String::new();
    for step in steps {
        out.push_str(&format!("[step {}] {}{}\n{}\n", step.index, ACTION_PREFIX, step.action, step.observation));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n: usize) -> Trajectory {
        let mut t = Trajectory::new("t");
        for i in 0..n {
            t.push(format!("a{i}"), format!("o{i}"));
        }
        t
    }

    fn goals(n: usize) -> SubgoalSequence {
        SubgoalSequence::new((0..n).map(|i| Subgoal::new(format!("g{i}")).unwrap()).collect()).unwrap()
    }

    #[test]
    fn render_empty_and_single() {
        assert_eq!(render_trajectory(&Trajectory::new("x")), "");
        let mut t = Trajectory::new("x");
        t.push("look", "You see a table.");
        assert_eq!(render_trajectory(&t), "> look\nYou see a table.\n");
        assert_eq!(render_trajectory(&t), render_trajectory(&t.clone()));
    }

    #[test]
    fn partition_examples() {
        let t = traj(4);
        let s = |a, b, i| SubTrajectorySpan::new(i, a, b);
        assert_eq!(validate_partition(&t, &[s(0, 1, 0), s(2, 3, 1)], &goals(2)), Ok(()));
        let err = validate_partition(&t, &[s(0, 2, 0), s(2, 3, 1)], &goals(2)).unwrap_err();
        assert_eq!(err.to_string(), "overlap at step 2");
        let err = validate_partition(&t, &[s(0, 1, 0)], &goals(2)).unwrap_err();
        assert!(err.to_string().starts_with("count mismatch"));
    }

    #[test]
    fn single_subgoal_partition_is_forced() {
        let t = traj(5);
        for start in 0..5 {
            for end in 0..6 {
                let ok = validate_partition(&t, &[SubTrajectorySpan::new(0, start, end)], &goals(1)).is_ok();
                assert_eq!(ok, start == 0 && end == 4, "({start},{end})");
            }
        }
    }

    #[test]
    fn partition_gap_and_uncovered() {
        let t = traj(4);
        let err = validate_partition(
            &t,
            &[SubTrajectorySpan::new(0, 0, 0), SubTrajectorySpan::new(1, 2, 3)],
            &goals(2),
        )
        .unwrap_err();
        assert_eq!(err, PartitionViolation::Gap { step: 1 });
        let err = validate_partition(
            &t,
            &[SubTrajectorySpan::new(0, 0, 0), SubTrajectorySpan::new(1, 1, 2)],
            &goals(2),
        )
        .unwrap_err();
        assert_eq!(err, PartitionViolation::Uncovered { from: 3, last: 3 });
    }

    #[test]
    fn subgoal_trims_and_rejects_newlines() {
        assert_eq!(Subgoal::new("  the pan is clean ").unwrap().as_str(), "the pan is clean");
        assert_eq!(Subgoal::new("   "), Err(TypeError::EmptySubgoal));
        assert!(matches!(Subgoal::new("a\nb"), Err(TypeError::MultilineSubgoal(_))));
        assert_ne!(Subgoal::new("Pan").unwrap(), Subgoal::new("pan").unwrap());
    }

    #[test]
    fn reserved_prefix_is_rejected() {
        assert!(check_observation("fine").is_ok());
        assert!(check_observation("> sneaky").is_err());
        assert!(check_observation("ok\n> sneaky").is_err());
        let mut t = traj(2);
        t.steps[1].index = 5;
        assert!(matches!(t.validate(), Err(TypeError::StepIndex { expected: 1, found: 5 })));
    }

    #[test]
    fn task_requires_description() {
        assert_eq!(
            Task::new("a", "  ", TaskType::Gripper, Split::Train),
            Err(TypeError::EmptyDescription)
        );
        assert_eq!(TaskType::parse("look_at_obj"), Some(TaskType::LookAtObj));
        assert_eq!(TaskType::parse("barman"), None);
    }
}
