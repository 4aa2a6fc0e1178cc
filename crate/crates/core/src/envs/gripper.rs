use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    join_list, world_seed, Care, EnvError, EnvName, EnvSpec, Environment, PlanStyle, PlannedSubgoal, Solvable,
    StepOutcome, EPISODE_OVER, NOTHING_HAPPENS, SUCCESS_MESSAGE,
};
use crate::types::{Split, Task, TaskType};

const ROOMS: [&str; 3] = ["rooma", "roomb", "roomc"];
const BALLS: [&str; 4] = ["ball1", "ball2", "ball3", "ball4"];
const LOCKED_ROOM: usize = 2;
const HANDS: [&str; 2] = ["left", "right"];

/// (number of balls, target room) in the order task types cycle.
const SHAPES: [(usize, usize); 6] = [(1, 1), (2, 1), (1, 2), (1, 0), (3, 1), (2, 2)];

fn room_index(s: &str) -> Option<usize> {
    ROOMS.iter().position(|r| *r == s)
}

fn ball_index(s: &str) -> Option<usize> {
    BALLS.iter().position(|b| *b == s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Goal {
    balls: Vec<usize>,
    room: usize,
}

impl Goal {
    fn describe(&self) -> String {
        let names: Vec<&str> = self.balls.iter().map(|b| BALLS[*b]).collect();
        let list = match names.len() {
            1 => names[0].to_string(),
            n => format!("{} and {}", names[..n - 1].join(", "), names[n - 1]),
        };
        format!("transport {list} to {}", ROOMS[self.room])
    }

    fn parse(desc: &str) -> Option<Goal> {
        let rest = desc.trim().strip_prefix("transport ")?;
        let (list, room) = rest.rsplit_once(" to ")?;
        let room = room_index(room)?;
        let mut balls = Vec::new();
        let (head, last) = match list.rsplit_once(" and ") {
            Some((h, l)) => (Some(h), l),
            None => (None, list),
        };
        for name in head.into_iter().flat_map(|h| h.split(", ")).chain(std::iter::once(last)) {
            let b = ball_index(name.trim())?;
            if balls.contains(&b) {
                return None;
            }
            balls.push(b);
        }
        Some(Goal { balls, room })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BallLoc {
    In(usize),
    Held(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct World {
    goal: Goal,
    robot: usize,
    locked: [bool; ROOMS.len()],
    balls: [BallLoc; BALLS.len()],
    done: bool,
}

impl World {
    fn generate(goal: Goal, task: &Task, seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(world_seed(task, seed));
        let mut balls = [BallLoc::In(0); BALLS.len()];
        for (i, slot) in balls.iter_mut().enumerate() {
            // goal balls never start in the target room
            let choices: Vec<usize> = [0, 1]
                .into_iter()
                .filter(|r| !goal.balls.contains(&i) || *r != goal.room)
                .collect();
            *slot = BallLoc::In(choices[rng.random_range(0..choices.len())]);
        }
        let mut locked = [false; ROOMS.len()];
        locked[LOCKED_ROOM] = true;
        World {
            goal,
            robot: 0,
            locked,
            balls,
            done: false,
        }
    }

    fn hand_contents(&self, hand: usize) -> Option<usize> {
        self.balls.iter().position(|l| *l == BallLoc::Held(hand))
    }

    fn room_view(&self) -> String {
        let here: Vec<String> = (0..BALLS.len())
            .filter(|b| self.balls[*b] == BallLoc::In(self.robot))
            .map(|b| BALLS[b].to_string())
            .collect();
        if here.is_empty() {
            "You see no balls.".into()
        } else {
            format!("You see {}.", join_list(&here))
        }
    }

    fn satisfied(&self) -> bool {
        self.goal.balls.iter().all(|b| self.balls[*b] == BallLoc::In(self.goal.room))
    }

    fn apply(&mut self, action: &str) -> Option<String> {
        let action = action.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if action == "look" {
            let grip = |h: usize| match self.hand_contents(h) {
                Some(b) => format!("your {} gripper holds {}", HANDS[h], BALLS[b]),
                None => format!("your {} gripper is empty", HANDS[h]),
            };
            return Some(format!(
                "You are in {}. {} Currently {} and {}.",
                ROOMS[self.robot],
                self.room_view(),
                grip(0),
                grip(1)
            ));
        }
        if let Some(r) = action.strip_prefix("move to ") {
            let r = room_index(r)?;
            if r == self.robot || self.locked[r] {
                return None;
            }
            self.robot = r;
            return Some(format!("You move to {}. {}", ROOMS[r], self.room_view()));
        }
        if let Some(r) = action.strip_prefix("unlock ") {
            let r = room_index(r)?;
            if !self.locked[r] || r == self.robot {
                return None;
            }
            self.locked[r] = false;
            return Some(format!("You unlock {}.", ROOMS[r]));
        }
        let (hand, rest) = action.split_once(' ')?;
        let hand = HANDS.iter().position(|h| *h == hand)?;
        if let Some(b) = rest.strip_prefix("grasp ") {
            let b = ball_index(b)?;
            if self.hand_contents(hand).is_some() || self.balls[b] != BallLoc::In(self.robot) {
                return None;
            }
            self.balls[b] = BallLoc::Held(hand);
            return Some(format!("You grasp {} with your {} gripper.", BALLS[b], HANDS[hand]));
        }
        if let Some(b) = rest.strip_prefix("release ") {
            let b = ball_index(b)?;
            if self.balls[b] != BallLoc::Held(hand) {
                return None;
            }
            self.balls[b] = BallLoc::In(self.robot);
            return Some(format!("You release {} in {}.", BALLS[b], ROOMS[self.robot]));
        }
        None
    }
}

/// Three rooms, four balls and a robot with two grippers. The third room
/// starts locked.
#[derive(Debug, Clone)]
pub struct GripperWorld {
    spec: EnvSpec,
    world: Option<World>,
}

impl GripperWorld {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::gripper_world(),
            world: None,
        }
    }

    fn world(&self) -> &World {
        self.world.as_ref().expect("environment reset")
    }
}

impl Default for GripperWorld {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for GripperWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, task: &Task, seed: u64) -> Result<String, EnvError> {
        if task.task_type != TaskType::Gripper {
            return Err(EnvError::UnknownTaskType {
                env: EnvName::GripperWorld,
                task_type: task.task_type,
            });
        }
        let goal = Goal::parse(&task.description).ok_or_else(|| EnvError::UnparsableTask(task.description.clone()))?;
        let world = World::generate(goal, task, seed);
        let placement: Vec<String> = BALLS
            .iter()
            .zip(world.balls.iter())
            .map(|(b, l)| match l {
                BallLoc::In(r) => format!("{b} is in {}", ROOMS[*r]),
                BallLoc::Held(_) => unreachable!("balls start on the floor"),
            })
            .collect();
        let obs = format!(
            "There are three rooms: rooma, roomb and roomc. {} is locked. {}. You are in rooma with both grippers empty. Your task is to: {}.",
            ROOMS[LOCKED_ROOM],
            join_list(&placement),
            task.description
        );
        self.world = Some(world);
        Ok(obs)
    }

    fn step(&mut self, action: &str) -> StepOutcome {
        let Some(world) = self.world.as_mut() else {
            return StepOutcome {
                observation: EPISODE_OVER.into(),
                done: true,
                success: false,
            };
        };
        if world.done {
            return StepOutcome {
                observation: EPISODE_OVER.into(),
                done: true,
                success: world.satisfied(),
            };
        }
        match world.apply(action) {
            None => StepOutcome::ongoing(NOTHING_HAPPENS),
            Some(obs) if world.satisfied() => {
                world.done = true;
                StepOutcome {
                    observation: format!("{obs} {SUCCESS_MESSAGE}"),
                    done: true,
                    success: true,
                }
            }
            Some(obs) => StepOutcome::ongoing(obs),
        }
    }

    fn goal_satisfied(&self) -> bool {
        self.world.as_ref().is_some_and(World::satisfied)
    }
}

/// Move one ball into one room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deliver {
    pub ball: usize,
    pub room: usize,
}

impl Deliver {
    /// Whether the target room is the one that starts locked.
    pub fn into_locked_room(&self) -> bool {
        self.room == LOCKED_ROOM
    }
}

impl Solvable for GripperWorld {
    type Op = Deliver;

    fn plan(&self, style: PlanStyle) -> Vec<PlannedSubgoal<Deliver>> {
        let goal = &self.world().goal;
        let balls = match style {
            PlanStyle::Informed => &goal.balls[..],
            PlanStyle::Naive => &goal.balls[..1],
        };
        balls
            .iter()
            .map(|&ball| PlannedSubgoal {
                text: format!("{} is at {}", BALLS[ball], ROOMS[goal.room]),
                op: Deliver { ball, room: goal.room },
            })
            .collect()
    }

    fn actions_for(&self, op: &Deliver, care: Care) -> Vec<String> {
        let w = self.world();
        let mut out = Vec::new();
        let mut robot = w.robot;
        let hand = match w.balls[op.ball] {
            BallLoc::Held(h) => h,
            BallLoc::In(r) if r == op.room => return out,
            BallLoc::In(r) => {
                if r != robot {
                    out.push(format!("move to {}", ROOMS[r]));
                    robot = r;
                }
                let h = (0..HANDS.len()).find(|h| w.hand_contents(*h).is_none()).unwrap_or(0);
                out.push(format!("{} grasp {}", HANDS[h], BALLS[op.ball]));
                h
            }
        };
        if robot != op.room {
            if w.locked[op.room] && care == Care::Careful {
                out.push(format!("unlock {}", ROOMS[op.room]));
            }
            out.push(format!("move to {}", ROOMS[op.room]));
        }
        out.push(format!("{} release {}", HANDS[hand], BALLS[op.ball]));
        out
    }
}

pub(super) fn generate_tasks(seed: u64, n_train: usize, n_test: usize) -> Result<(Vec<Task>, Vec<Task>), EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<String> = HashSet::new();
    let mut split_tasks = |split: Split, n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<Task>, EnvError> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (count, room) = SHAPES[i % SHAPES.len()];
            let candidates: Vec<Goal> = subsets(BALLS.len(), count)
                .into_iter()
                .map(|balls| Goal { balls, room })
                .collect();
            let fresh: Vec<&Goal> = candidates.iter().filter(|g| !used.contains(&g.describe())).collect();
            if fresh.is_empty() {
                return Err(EnvError::TooManyTasks {
                    task_type: TaskType::Gripper,
                    requested: n_train + n_test,
                    available: candidates.len(),
                });
            }
            let desc = fresh[rng.random_range(0..fresh.len())].describe();
            used.insert(desc.clone());
            let split_name = match split {
                Split::Train => "train",
                Split::Test => "test",
            };
            out.push(
                Task::new(format!("gripper_world-{split_name}-{i:03}"), desc, TaskType::Gripper, split)
                    .expect("non-empty"),
            );
        }
        Ok(out)
    };
    let train = split_tasks(Split::Train, n_train, &mut rng)?;
    let test = split_tasks(Split::Test, n_test, &mut rng)?;
    Ok((train, test))
}

/// Sorted `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for mut rest in subsets(n, k - 1) {
            if rest.first().is_none_or(|r| *r > first) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
    }
    out
}
