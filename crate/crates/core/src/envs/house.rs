use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    join_list, world_seed, Care, EnvError, EnvName, EnvSpec, Environment, PlanStyle, PlannedSubgoal, Solvable,
    StepOutcome, EPISODE_OVER, NOTHING_HAPPENS, SUCCESS_MESSAGE,
};
use crate::types::{Split, Task, TaskType};

const RECEPTACLES: [&str; 10] = [
    "cabinet",
    "countertop",
    "desk",
    "diningtable",
    "drawer",
    "fridge",
    "microwave",
    "shelf",
    "sidetable",
    "sinkbasin",
];
const SPAWN: [&str; 7] = ["cabinet", "countertop", "desk", "diningtable", "drawer", "shelf", "sidetable"];
const LAMP_SPOTS: [&str; 2] = ["desk", "sidetable"];
const DISTRACTORS: [&str; 6] = ["bowl", "candle", "soapbar", "spraybottle", "cellphone", "watch"];
const MAX_OBJECTS: usize = 4;

fn recep_index(name: &str) -> Option<usize> {
    RECEPTACLES.iter().position(|r| *r == name)
}

fn openable(r: usize) -> bool {
    matches!(RECEPTACLES[r], "cabinet" | "drawer" | "fridge" | "microwave")
}

fn prep(r: usize) -> &'static str {
    if openable(r) {
        "in"
    } else {
        "on"
    }
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn vocab(tt: TaskType) -> (&'static [&'static str], &'static [&'static str]) {
    match tt {
        TaskType::PickAndPlace => (
            &["book", "pen", "cd", "keychain", "mug", "remotecontrol"],
            &["shelf", "diningtable", "desk", "countertop", "cabinet", "drawer", "sidetable"],
        ),
        TaskType::PickCleanThenPlace => (
            &["pan", "plate", "mug", "pot", "ladle", "spatula"],
            &["countertop", "diningtable", "shelf", "cabinet", "sidetable"],
        ),
        TaskType::PickHeatThenPlace => (
            &["egg", "potato", "mug", "apple", "bread", "tomato"],
            &["countertop", "diningtable", "shelf", "cabinet", "sidetable"],
        ),
        TaskType::PickCoolThenPlace => (
            &["lettuce", "tomato", "apple", "potato", "bread", "egg"],
            &["countertop", "diningtable", "shelf", "cabinet", "sidetable"],
        ),
        TaskType::LookAtObj => (&["book", "cd", "pen", "keychain", "remotecontrol", "vase"], &[]),
        TaskType::PickTwoObj => (
            &["apple", "book", "cd", "mug", "pen", "keychain"],
            &["shelf", "diningtable", "desk", "countertop", "sidetable"],
        ),
        TaskType::Gripper => (&[], &[]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Goal {
    Place { cat: String, recep: usize },
    Clean { cat: String, recep: usize },
    Heat { cat: String, recep: usize },
    Cool { cat: String, recep: usize },
    Look { cat: String },
    Two { cat: String, recep: usize },
}

impl Goal {
    fn task_type(&self) -> TaskType {
        match self {
            Goal::Place { .. } => TaskType::PickAndPlace,
            Goal::Clean { .. } => TaskType::PickCleanThenPlace,
            Goal::Heat { .. } => TaskType::PickHeatThenPlace,
            Goal::Cool { .. } => TaskType::PickCoolThenPlace,
            Goal::Look { .. } => TaskType::LookAtObj,
            Goal::Two { .. } => TaskType::PickTwoObj,
        }
    }

    fn cat(&self) -> &str {
        match self {
            Goal::Place { cat, .. }
            | Goal::Clean { cat, .. }
            | Goal::Heat { cat, .. }
            | Goal::Cool { cat, .. }
            | Goal::Look { cat }
            | Goal::Two { cat, .. } => cat,
        }
    }

    fn recep(&self) -> Option<usize> {
        match self {
            Goal::Place { recep, .. }
            | Goal::Clean { recep, .. }
            | Goal::Heat { recep, .. }
            | Goal::Cool { recep, .. }
            | Goal::Two { recep, .. } => Some(*recep),
            Goal::Look { .. } => None,
        }
    }

    fn describe(&self) -> String {
        let at = |r: usize| format!("{} the {}", prep(r), RECEPTACLES[r]);
        match self {
            Goal::Place { cat, recep } => format!("put {} {cat} {}", article(cat), at(*recep)),
            Goal::Clean { cat, recep } => format!("clean {} {cat} and place it {}", article(cat), at(*recep)),
            Goal::Heat { cat, recep } => format!("heat {} {cat} and place it {}", article(cat), at(*recep)),
            Goal::Cool { cat, recep } => format!("cool {} {cat} and place it {}", article(cat), at(*recep)),
            Goal::Look { cat } => format!("examine the {cat} under the desklamp"),
            Goal::Two { cat, recep } => format!("put two {cat}s {}", at(*recep)),
        }
    }

    fn parse(desc: &str) -> Option<Goal> {
        fn split_target(s: &str) -> Option<(&str, usize)> {
            let (head, recep) = s.rsplit_once(" the ")?;
            let head = head.strip_suffix(" in").or_else(|| head.strip_suffix(" on"))?;
            Some((head, recep_index(recep)?))
        }
        fn strip_article(s: &str) -> Option<&str> {
            s.strip_prefix("a ").or_else(|| s.strip_prefix("an "))
        }
        let desc = desc.trim();
        if let Some(rest) = desc.strip_prefix("examine the ") {
            let cat = rest.strip_suffix(" under the desklamp")?;
            return (!cat.is_empty()).then(|| Goal::Look { cat: cat.to_string() });
        }
        if let Some(rest) = desc.strip_prefix("put two ") {
            let (head, recep) = split_target(rest)?;
            let cat = head.strip_suffix('s')?.to_string();
            return Some(Goal::Two { cat, recep });
        }
        if let Some(rest) = desc.strip_prefix("put ") {
            let (head, recep) = split_target(rest)?;
            let cat = strip_article(head)?.to_string();
            return Some(Goal::Place { cat, recep });
        }
        for verb in ["clean", "heat", "cool"] {
            if let Some(rest) = desc.strip_prefix(verb).and_then(|r| r.strip_prefix(' ')) {
                let (head, recep) = split_target(rest)?;
                let cat = strip_article(head.strip_suffix(" and place it")?)?.to_string();
                return Some(match verb {
                    "clean" => Goal::Clean { cat, recep },
                    "heat" => Goal::Heat { cat, recep },
                    _ => Goal::Cool { cat, recep },
                });
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    At(usize),
    Held,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Obj {
    name: String,
    cat: String,
    loc: Loc,
    clean: bool,
    hot: bool,
    cold: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct World {
    goal: Goal,
    objs: Vec<Obj>,
    agent: Option<usize>,
    open: [bool; RECEPTACLES.len()],
    lamp: usize,
    lamp_on: bool,
    examined: Vec<String>,
    done: bool,
}

impl World {
    fn generate(goal: Goal, task: &Task, seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(world_seed(task, seed));
        let lamp = recep_index(LAMP_SPOTS[rng.random_range(0..LAMP_SPOTS.len())]).expect("lamp spot");
        let count = if matches!(goal, Goal::Two { .. }) { 2 } else { 1 };
        let forbidden: Vec<usize> = goal
            .recep()
            .into_iter()
            .chain(matches!(goal, Goal::Look { .. }).then_some(lamp))
            .collect();
        let goal_spots: Vec<usize> = SPAWN
            .iter()
            .map(|r| recep_index(r).expect("spawn"))
            .filter(|r| !forbidden.contains(r))
            .collect();
        let mut objs = Vec::new();
        for i in 1..=count {
            objs.push(Obj {
                name: format!("{} {i}", goal.cat()),
                cat: goal.cat().to_string(),
                loc: Loc::At(goal_spots[rng.random_range(0..goal_spots.len())]),
                clean: false,
                hot: false,
                cold: false,
            });
        }
        let n_distractors = rng.random_range(1..=(MAX_OBJECTS - count).min(2));
        let mut pool: Vec<&str> = DISTRACTORS.iter().copied().filter(|d| *d != goal.cat()).collect();
        for _ in 0..n_distractors {
            let cat = pool.remove(rng.random_range(0..pool.len()));
            let spot = recep_index(SPAWN[rng.random_range(0..SPAWN.len())]).expect("spawn");
            objs.push(Obj {
                name: format!("{cat} 1"),
                cat: cat.to_string(),
                loc: Loc::At(spot),
                clean: false,
                hot: false,
                cold: false,
            });
        }
        objs.sort_by(|a, b| a.name.cmp(&b.name));
        World {
            goal,
            objs,
            agent: None,
            open: [false; RECEPTACLES.len()],
            lamp,
            lamp_on: false,
            examined: Vec::new(),
            done: false,
        }
    }

    fn held(&self) -> Option<usize> {
        self.objs.iter().position(|o| o.loc == Loc::Held)
    }

    fn accessible(&self, r: usize) -> bool {
        !openable(r) || self.open[r]
    }

    fn contents(&self, r: usize) -> String {
        let mut items: Vec<String> = Vec::new();
        if self.lamp == r {
            items.push("a desklamp".into());
        }
        items.extend(
            self.objs
                .iter()
                .filter(|o| o.loc == Loc::At(r))
                .map(|o| format!("a {}", o.name)),
        );
        if items.is_empty() {
            "nothing".into()
        } else {
            join_list(&items)
        }
    }

    fn describe_location(&self, r: usize) -> String {
        let name = RECEPTACLES[r];
        if openable(r) {
            if self.open[r] {
                format!("The {name} is open. In it, you see {}.", self.contents(r))
            } else {
                format!("The {name} is closed.")
            }
        } else {
            format!("On the {name}, you see {}.", self.contents(r))
        }
    }

    /// Resolves an object reference by exact name, then by category.
    fn resolve(&self, reference: &str, pred: impl Fn(&Obj) -> bool) -> Option<usize> {
        self.objs
            .iter()
            .position(|o| o.name == reference && pred(o))
            .or_else(|| self.objs.iter().position(|o| o.cat == reference && pred(o)))
    }

    fn satisfied(&self) -> bool {
        let at = |o: &Obj, r: usize| o.loc == Loc::At(r);
        match &self.goal {
            Goal::Place { cat, recep } => self.objs.iter().any(|o| &o.cat == cat && at(o, *recep)),
            Goal::Clean { cat, recep } => self.objs.iter().any(|o| &o.cat == cat && o.clean && at(o, *recep)),
            Goal::Heat { cat, recep } => self.objs.iter().any(|o| &o.cat == cat && o.hot && at(o, *recep)),
            Goal::Cool { cat, recep } => self.objs.iter().any(|o| &o.cat == cat && o.cold && at(o, *recep)),
            Goal::Look { cat } => self.objs.iter().any(|o| &o.cat == cat && self.examined.contains(&o.name)),
            Goal::Two { cat, recep } => self.objs.iter().filter(|o| &o.cat == cat && at(o, *recep)).count() >= 2,
        }
    }

    /// Applies `action`; `None` means nothing happened.
    fn apply(&mut self, action: &str) -> Option<String> {
        let action = action.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if action == "look" {
            return Some(match self.agent {
                None => "You are in the middle of a room.".to_string(),
                Some(r) => format!("You are at the {}. {}", RECEPTACLES[r], self.describe_location(r)),
            });
        }
        if action == "inventory" {
            return Some(match self.held() {
                Some(i) => format!("You are carrying: a {}.", self.objs[i].name),
                None => "You are not carrying anything.".to_string(),
            });
        }
        if action == "use desklamp" {
            if self.agent != Some(self.lamp) {
                return None;
            }
            self.lamp_on = true;
            if let Some(i) = self.held() {
                let name = self.objs[i].name.clone();
                if !self.examined.contains(&name) {
                    self.examined.push(name);
                }
            }
            return Some("You turn on the desklamp.".to_string());
        }
        if let Some(r) = action.strip_prefix("go to ") {
            let r = recep_index(r)?;
            if self.agent == Some(r) {
                return None;
            }
            self.agent = Some(r);
            return Some(format!("You arrive at the {}. {}", RECEPTACLES[r], self.describe_location(r)));
        }
        if let Some(r) = action.strip_prefix("open ") {
            let r = recep_index(r)?;
            if self.agent != Some(r) || !openable(r) || self.open[r] {
                return None;
            }
            self.open[r] = true;
            return Some(format!("You open the {}. In it, you see {}.", RECEPTACLES[r], self.contents(r)));
        }
        if let Some(r) = action.strip_prefix("close ") {
            let r = recep_index(r)?;
            if self.agent != Some(r) || !openable(r) || !self.open[r] {
                return None;
            }
            self.open[r] = false;
            return Some(format!("You close the {}.", RECEPTACLES[r]));
        }
        if let Some(rest) = action.strip_prefix("take ") {
            let (obj, r) = rest.rsplit_once(" from ")?;
            let r = recep_index(r)?;
            if self.agent != Some(r) || !self.accessible(r) || self.held().is_some() {
                return None;
            }
            let i = self.resolve(obj, |o| o.loc == Loc::At(r))?;
            self.objs[i].loc = Loc::Held;
            return Some(format!("You pick up the {} from the {}.", self.objs[i].name, RECEPTACLES[r]));
        }
        if let Some(rest) = action.strip_prefix("put ") {
            let (obj, r) = rest.rsplit_once(" in ").or_else(|| rest.rsplit_once(" on "))?;
            let r = recep_index(r)?;
            if self.agent != Some(r) || !self.accessible(r) {
                return None;
            }
            let i = self.resolve(obj, |o| o.loc == Loc::Held)?;
            self.objs[i].loc = Loc::At(r);
            return Some(format!("You put the {} {} the {}.", self.objs[i].name, prep(r), RECEPTACLES[r]));
        }
        for (verb, tool) in [("clean", "sinkbasin"), ("heat", "microwave"), ("cool", "fridge")] {
            if let Some(rest) = action.strip_prefix(verb).and_then(|r| r.strip_prefix(' ')) {
                let (obj, r) = rest.rsplit_once(" with ")?;
                if r != tool {
                    return None;
                }
                let r = recep_index(r)?;
                if self.agent != Some(r) || !self.accessible(r) {
                    return None;
                }
                let i = self.resolve(obj, |o| o.loc == Loc::Held)?;
                let o = &mut self.objs[i];
                match verb {
                    "clean" => o.clean = true,
                    "heat" => {
                        o.hot = true;
                        o.cold = false;
                    }
                    _ => {
                        o.cold = true;
                        o.hot = false;
                    }
                }
                return Some(format!("You {verb} the {} using the {tool}.", o.name));
            }
        }
        None
    }
}

/// Household world: ten receptacles, up to four objects, one desklamp.
#[derive(Debug, Clone)]
pub struct TextHouse {
    spec: EnvSpec,
    world: Option<World>,
}

impl TextHouse {
    pub fn new() -> Self {
        Self {
            spec: EnvSpec::text_house(),
            world: None,
        }
    }

    fn world(&self) -> &World {
        self.world.as_ref().expect("environment reset")
    }
}

impl Default for TextHouse {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for TextHouse {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, task: &Task, seed: u64) -> Result<String, EnvError> {
        if !self.spec.task_types.contains(&task.task_type) {
            return Err(EnvError::UnknownTaskType {
                env: EnvName::TextHouse,
                task_type: task.task_type,
            });
        }
        let goal = Goal::parse(&task.description)
            .filter(|g| g.task_type() == task.task_type)
            .ok_or_else(|| EnvError::UnparsableTask(task.description.clone()))?;
        let world = World::generate(goal, task, seed);
        let places: Vec<String> = RECEPTACLES.iter().map(|r| format!("a {r}")).collect();
        let obs = format!(
            "You are in the middle of a room. Looking quickly around you, you see {}. Your task is to: {}.",
            join_list(&places),
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

/// Structured household subgoal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HouseOp {
    Fetch { cat: String },
    Clean { cat: String },
    Heat { cat: String },
    Cool { cat: String },
    Place { cat: String, recep: usize },
    LampOn,
}

/// Tracks agent position and open receptacles while planning ahead.
struct Cursor<'w> {
    world: &'w World,
    agent: Option<usize>,
    open: [bool; RECEPTACLES.len()],
    held: Option<usize>,
    actions: Vec<String>,
}

impl<'w> Cursor<'w> {
    fn new(world: &'w World) -> Self {
        Self {
            world,
            agent: world.agent,
            open: world.open,
            held: world.held(),
            actions: Vec::new(),
        }
    }

    fn go(&mut self, r: usize) {
        if self.agent != Some(r) {
            self.actions.push(format!("go to {}", RECEPTACLES[r]));
            self.agent = Some(r);
        }
    }

    fn open(&mut self, r: usize) {
        if openable(r) && !self.open[r] {
            self.actions.push(format!("open {}", RECEPTACLES[r]));
            self.open[r] = true;
        }
    }

    /// Ensures an object of `cat` is in hand, preferring one not already at
    /// `avoid`. Returns its index.
    fn fetch(&mut self, cat: &str, avoid: Option<usize>) -> Option<usize> {
        if let Some(h) = self.held {
            if self.world.objs[h].cat == cat {
                return Some(h);
            }
            let r = self.agent?;
            self.open(r);
            self.actions
                .push(format!("put {} {} {}", self.world.objs[h].name, prep(r), RECEPTACLES[r]));
            self.held = None;
        }
        let objs = &self.world.objs;
        let i = objs
            .iter()
            .position(|o| o.cat == cat && avoid.is_none_or(|r| o.loc != Loc::At(r)))
            .or_else(|| objs.iter().position(|o| o.cat == cat))?;
        let Loc::At(r) = objs[i].loc else { return None };
        self.go(r);
        self.open(r);
        self.actions.push(format!("take {} from {}", objs[i].name, RECEPTACLES[r]));
        self.held = Some(i);
        Some(i)
    }

    fn treat(&mut self, cat: &str, verb: &str, tool: &str, care: Care) {
        let Some(i) = self.fetch(cat, None) else { return };
        let r = recep_index(tool).expect("tool");
        self.go(r);
        if care == Care::Careful {
            self.open(r);
        }
        self.actions.push(format!("{verb} {} with {tool}", self.world.objs[i].name));
    }
}

impl Solvable for TextHouse {
    type Op = HouseOp;

    fn plan(&self, style: PlanStyle) -> Vec<PlannedSubgoal<HouseOp>> {
        let goal = &self.world().goal;
        let cat = goal.cat().to_string();
        let place = |r: usize, text: String| PlannedSubgoal {
            text,
            op: HouseOp::Place { cat: cat.clone(), recep: r },
        };
        let placed = |r: usize| format!("the {cat} is {} the {}", prep(r), RECEPTACLES[r]);
        let treated = |word: &str, op: HouseOp| PlannedSubgoal {
            text: format!("the {cat} is {word}"),
            op,
        };
        let informed = style == PlanStyle::Informed;
        match goal {
            Goal::Place { recep, .. } => vec![place(*recep, placed(*recep))],
            Goal::Clean { recep, .. } | Goal::Heat { recep, .. } | Goal::Cool { recep, .. } => {
                let first = match goal {
                    Goal::Clean { .. } => treated("clean", HouseOp::Clean { cat: cat.clone() }),
                    Goal::Heat { .. } => treated("hot", HouseOp::Heat { cat: cat.clone() }),
                    _ => treated("cold", HouseOp::Cool { cat: cat.clone() }),
                };
                // an uninformed planner skips the treatment step, except for
                // cooling where the task wording is followed literally
                if informed || matches!(goal, Goal::Cool { .. }) {
                    vec![first, place(*recep, placed(*recep))]
                } else {
                    vec![place(*recep, placed(*recep))]
                }
            }
            Goal::Look { .. } => {
                let fetch = PlannedSubgoal {
                    text: format!("the {cat} is in hand"),
                    op: HouseOp::Fetch { cat: cat.clone() },
                };
                let lamp = PlannedSubgoal {
                    text: "the desklamp is on".into(),
                    op: HouseOp::LampOn,
                };
                if informed {
                    vec![fetch, lamp]
                } else {
                    vec![lamp, fetch]
                }
            }
            Goal::Two { recep, .. } => {
                let r = *recep;
                let where_ = format!("{} the {}", prep(r), RECEPTACLES[r]);
                if informed {
                    vec![
                        place(r, format!("the first {cat} is {where_}")),
                        place(r, format!("the second {cat} is {where_}")),
                    ]
                } else {
                    vec![place(r, placed(r))]
                }
            }
        }
    }

    fn actions_for(&self, op: &HouseOp, care: Care) -> Vec<String> {
        let world = self.world();
        let mut c = Cursor::new(world);
        match op {
            HouseOp::Fetch { cat } => {
                c.fetch(cat, None);
            }
            HouseOp::Clean { cat } => c.treat(cat, "clean", "sinkbasin", care),
            HouseOp::Heat { cat } => c.treat(cat, "heat", "microwave", care),
            HouseOp::Cool { cat } => c.treat(cat, "cool", "fridge", care),
            HouseOp::Place { cat, recep } => {
                if let Some(i) = c.fetch(cat, Some(*recep)) {
                    c.go(*recep);
                    c.open(*recep);
                    c.actions
                        .push(format!("put {} {} {}", world.objs[i].name, prep(*recep), RECEPTACLES[*recep]));
                }
            }
            HouseOp::LampOn => {
                c.go(world.lamp);
                c.actions.push("use desklamp".into());
            }
        }
        c.actions
    }
}

pub(super) fn generate_tasks(seed: u64, n_train: usize, n_test: usize) -> Result<(Vec<Task>, Vec<Task>), EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: HashSet<String> = HashSet::new();
    let mut split_tasks = |split: Split, n: usize, rng: &mut ChaCha8Rng| -> Result<Vec<Task>, EnvError> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let tt = TaskType::HOUSEHOLD[i % TaskType::HOUSEHOLD.len()];
            let (objs, targets) = vocab(tt);
            let candidates: Vec<Goal> = objs
                .iter()
                .flat_map(|o| {
                    let o = o.to_string();
                    let per_target: Vec<Goal> = match tt {
                        TaskType::LookAtObj => vec![Goal::Look { cat: o.clone() }],
                        _ => targets
                            .iter()
                            .map(|t| {
                                let (cat, recep) = (o.clone(), recep_index(t).expect("target"));
                                match tt {
                                    TaskType::PickAndPlace => Goal::Place { cat, recep },
                                    TaskType::PickCleanThenPlace => Goal::Clean { cat, recep },
                                    TaskType::PickHeatThenPlace => Goal::Heat { cat, recep },
                                    TaskType::PickCoolThenPlace => Goal::Cool { cat, recep },
                                    _ => Goal::Two { cat, recep },
                                }
                            })
                            .collect(),
                    };
                    per_target
                })
                .collect();
            let available = candidates.len();
            let fresh: Vec<&Goal> = candidates.iter().filter(|g| !used.contains(&g.describe())).collect();
            if fresh.is_empty() {
                return Err(EnvError::TooManyTasks {
                    task_type: tt,
                    requested: used.iter().filter(|d| Goal::parse(d).is_some_and(|g| g.task_type() == tt)).count() + 1,
                    available,
                });
            }
            let goal = fresh[rng.random_range(0..fresh.len())];
            let desc = goal.describe();
            used.insert(desc.clone());
            let split_name = match split {
                Split::Train => "train",
                Split::Test => "test",
            };
            out.push(Task::new(format!("text_house-{split_name}-{i:03}"), desc, tt, split).expect("non-empty"));
        }
        Ok(out)
    };
    let train = split_tasks(Split::Train, n_train, &mut rng)?;
    let test = split_tasks(Split::Test, n_test, &mut rng)?;
    Ok((train, test))
}
