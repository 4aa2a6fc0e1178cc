//! Deterministic scripted-backend fixtures.
//!
//! The generator plays every episode the agent can run on a task (train
//! attempts, and test episodes with an informed or naive planner and a
//! careful or careless executor) against the real environment, then writes
//! one script entry per model call on those paths. Where the informed and
//! naive answers differ, the informed entry also requires an insight text
//! that only retrieved memory puts into the prompt, and it is listed first.
//! Without that memory the scripted model falls back to the naive answer.

use std::collections::HashMap;

use crate::agent::{render_history, Resolution};
use crate::envs::{
    generate_tasks, Care, Deliver, EnvError, EnvName, EnvSpec, GripperWorld, HouseOp, PlanStyle,
    Solvable, TextHouse,
};
use crate::insight::InsightStore;
use crate::llm::{RoleTag, ScriptEntry, ScriptFile, KEY_SEPARATOR};
use crate::reflection::ExperiencePair;
use crate::types::{render_steps, render_trajectory, Outcome, Subgoal, SubTrajectorySpan, Task, TaskType, Trajectory};

/// Task seed, episode seed and split sizes of a bundled fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureParams {
    pub task_seed: u64,
    /// Seed of the collection episodes.
    pub seed: u64,
    /// Evaluation seeds; the first must equal `seed`.
    pub eval_seeds: &'static [u64],
    pub n_train: usize,
    pub n_test: usize,
}

pub const TEXT_HOUSE_PARAMS: FixtureParams = FixtureParams {
    task_seed: 7,
    seed: 0,
    eval_seeds: &[0],
    n_train: 6,
    n_test: 6,
};

pub const GRIPPER_PARAMS: FixtureParams = FixtureParams {
    task_seed: 7,
    seed: 0,
    eval_seeds: &[0, 1, 2],
    n_train: 6,
    n_test: 6,
};

/// Eight household training tasks for the reflection-only fixture.
pub const REFLECT8_PARAMS: FixtureParams = FixtureParams {
    task_seed: 8,
    seed: 0,
    eval_seeds: &[0],
    n_train: 8,
    n_test: 0,
};

/// Hand-written knowledge the scripted model "has" about a domain.
trait Domain: Solvable {
    fn fresh() -> Self;
    fn plan_insight(task: &Task) -> &'static str;
    fn exec_insight(op: &Self::Op) -> &'static str;
    fn reflexion_note(task: &Task) -> &'static str;
}

impl Domain for TextHouse {
    fn fresh() -> Self {
        TextHouse::new()
    }

    fn plan_insight(task: &Task) -> &'static str {
        match task.task_type {
            TaskType::PickCleanThenPlace => {
                "Plan a cleaning subgoal before the placement subgoal when the task asks for something clean."
            }
            TaskType::PickHeatThenPlace => {
                "Plan a heating subgoal before the placement subgoal when the task asks for something hot."
            }
            TaskType::PickCoolThenPlace => {
                "Plan a cooling subgoal before the placement subgoal when the task asks for something cool."
            }
            TaskType::LookAtObj => "Get the object in hand before turning on the desklamp.",
            TaskType::PickTwoObj => "Plan a separate placement subgoal for each of the two objects.",
            _ => "A plain put task needs only one placement subgoal.",
        }
    }

    fn exec_insight(op: &HouseOp) -> &'static str {
        match op {
            HouseOp::Fetch { .. } => "Go to the receptacle holding the object, open it if needed and take the object.",
            HouseOp::Clean { .. } => "Carry the object to the sinkbasin and clean it there.",
            HouseOp::Heat { .. } => "Open the microwave before heating something with it.",
            HouseOp::Cool { .. } => "Open the fridge before cooling something with it.",
            HouseOp::Place { .. } => "Carry the object to the target receptacle, open it if needed, then put it there.",
            HouseOp::LampOn => "Go to the desklamp and use it while holding the object.",
        }
    }

    fn reflexion_note(task: &Task) -> &'static str {
        match task.task_type {
            TaskType::PickHeatThenPlace => {
                "I tried to heat the object while the microwave was closed. Next time I will open the microwave first."
            }
            TaskType::PickCoolThenPlace => {
                "I tried to cool the object while the fridge was closed. Next time I will open the fridge first."
            }
            _ => "I did not finish the task. Next time I will check that each step worked.",
        }
    }
}

impl Domain for GripperWorld {
    fn fresh() -> Self {
        GripperWorld::new()
    }

    fn plan_insight(task: &Task) -> &'static str {
        let balls = task.description.split_whitespace().filter(|w| w.starts_with("ball")).count();
        if balls > 1 {
            "Plan one delivery subgoal for each ball named in the task."
        } else {
            "A task naming a single ball needs only one delivery subgoal."
        }
    }

    fn exec_insight(op: &Deliver) -> &'static str {
        if op.into_locked_room() {
            "Unlock roomc before trying to move into it."
        } else {
            "Grasp the ball where it lies, move to the target room and release it there."
        }
    }

    fn reflexion_note(_task: &Task) -> &'static str {
        "I tried to enter roomc while it was locked. Next time I will unlock roomc before moving there."
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SimMode {
    Train(Care),
    Test(PlanStyle, Care),
}

struct PlanCall {
    history: String,
    response: String,
}

struct ExecCall {
    subgoal: String,
    n: usize,
    last_observation: String,
    response: String,
    /// Execution insight of the subgoal's operation, when known.
    insight: Option<&'static str>,
    /// Initial observation and trajectory exactly as the prompt shows them.
    context: String,
}

/// One simulated episode with every model call the agent would make.
struct Sim {
    trajectory: Trajectory,
    plan_calls: Vec<PlanCall>,
    exec_calls: Vec<ExecCall>,
    /// Informed subgoal texts with the number of steps spent on each
    /// (train mode only).
    segments: Vec<(String, &'static str, usize)>,
}

fn simulate<D: Domain>(task: &Task, seed: u64, budget: usize, mode: SimMode) -> Result<Sim, EnvError> {
    let mut env = D::fresh();
    let initial = env.reset(task, seed)?;
    let mut sim = Sim {
        trajectory: Trajectory::new(task.id.clone()),
        plan_calls: Vec::new(),
        exec_calls: Vec::new(),
        segments: Vec::new(),
    };
    let last_obs = |t: &Trajectory| t.last_observation().unwrap_or(&initial).to_string();
    let context = |t: &Trajectory| {
        let rendered = render_trajectory(t);
        let rendered = if rendered.is_empty() { "(none)".to_string() } else { rendered };
        format!("Initial observation:\n{initial}\nTrajectory so far:\n{rendered}\n")
    };
    let mut success = env.goal_satisfied();

    match mode {
        SimMode::Train(care) => {
            let mut n = 0;
            'outer: for sg in env.plan(PlanStyle::Informed) {
                let mut spent = 0;
                for action in env.actions_for(&sg.op, care) {
                    if success || sim.trajectory.len() >= budget {
                        break 'outer;
                    }
                    sim.exec_calls.push(ExecCall {
                        subgoal: task.description.clone(),
                        n,
                        last_observation: last_obs(&sim.trajectory),
                        response: format!("ACTION: {action}"),
                        insight: None,
                        context: context(&sim.trajectory),
                    });
                    let out = env.step(&action);
                    sim.trajectory.push(action, out.observation);
                    n += 1;
                    spent += 1;
                    if out.done {
                        success = out.success;
                    }
                }
                sim.segments.push((sg.text, D::exec_insight(&sg.op), spent));
            }
            if !success && sim.trajectory.len() < budget {
                sim.exec_calls.push(ExecCall {
                    subgoal: task.description.clone(),
                    n,
                    last_observation: last_obs(&sim.trajectory),
                    response: "COMPLETE".into(),
                    insight: None,
                    context: context(&sim.trajectory),
                });
            }
        }
        SimMode::Test(style, care) => {
            let plan = env.plan(style);
            let mut history: Vec<(Subgoal, Resolution)> = Vec::new();
            'episode: while !success && sim.trajectory.len() < budget {
                let next = plan.get(history.len());
                sim.plan_calls.push(PlanCall {
                    history: render_history(&history),
                    response: next.map_or_else(|| "DONE".to_string(), |sg| format!("SUBGOAL: {}", sg.text)),
                });
                let Some(sg) = next else { break };
                let insight = Some(D::exec_insight(&sg.op));
                let mut n = 0;
                for action in env.actions_for(&sg.op, care) {
                    if sim.trajectory.len() >= budget {
                        break 'episode;
                    }
                    sim.exec_calls.push(ExecCall {
                        subgoal: sg.text.clone(),
                        n,
                        last_observation: last_obs(&sim.trajectory),
                        response: format!("ACTION: {action}"),
                        insight,
                        context: context(&sim.trajectory),
                    });
                    let out = env.step(&action);
                    sim.trajectory.push(action, out.observation);
                    n += 1;
                    if out.done {
                        success = out.success;
                        break 'episode;
                    }
                }
                if sim.trajectory.len() >= budget {
                    break;
                }
                sim.exec_calls.push(ExecCall {
                    subgoal: sg.text.clone(),
                    n,
                    last_observation: last_obs(&sim.trajectory),
                    response: "COMPLETE".into(),
                    insight,
                    context: context(&sim.trajectory),
                });
                history.push((Subgoal::new(&sg.text).expect("plan text is a valid subgoal"), Resolution::Completed));
            }
        }
    }
    sim.trajectory.outcome = if success {
        Outcome::Success
    } else if sim.trajectory.len() >= budget {
        Outcome::Truncated
    } else {
        Outcome::Failure
    };
    Ok(sim)
}

/// Collects entries, rejecting a key that would need two answers.
#[derive(Default)]
struct ScriptBuilder {
    entries: Vec<(RoleTag, Vec<String>, String)>,
    index: HashMap<(RoleTag, String), String>,
}

impl ScriptBuilder {
    /// Adds an entry; an identical key must carry the identical answer.
    fn add(&mut self, role: RoleTag, parts: Vec<String>, response: String) {
        let key = parts.join(KEY_SEPARATOR);
        match self.index.get(&(role, key.clone())) {
            Some(existing) if *existing == response => {}
            Some(existing) => panic!("fixture conflict for {role} key {key:?}: {existing:?} vs {response:?}"),
            None => {
                self.index.insert((role, key), response.clone());
                self.entries.push((role, parts, response));
            }
        }
    }

    /// Adds an entry unless the key exists; returns the answer the backend
    /// will actually give.
    fn add_or_reuse(&mut self, role: RoleTag, parts: Vec<String>, response: String) -> String {
        let key = parts.join(KEY_SEPARATOR);
        if let Some(existing) = self.index.get(&(role, key)) {
            return existing.clone();
        }
        self.add(role, parts, response.clone());
        response
    }

    /// Entries with more key parts come first so that marked answers win
    /// over their unmarked fallbacks.
    fn finish(mut self) -> ScriptFile {
        self.entries.sort_by_key(|(_, parts, _)| std::cmp::Reverse(parts.len()));
        ScriptFile::new(
            self.entries
                .into_iter()
                .map(|(role, parts, response)| ScriptEntry::new(role, parts.join(KEY_SEPARATOR), response))
                .collect(),
        )
    }
}

fn task_part(task: &Task) -> String {
    format!("Task: {}\n", task.description)
}

fn exec_part(call: &ExecCall) -> String {
    format!(
        "Current subgoal: {}\nSteps taken on this subgoal: {}\nLast observation: {}\n",
        call.subgoal, call.n, call.last_observation
    )
}

fn notes_part(notes: &[String]) -> String {
    let lines: Vec<String> = notes.iter().enumerate().map(|(i, n)| format!("{}. {n}", i + 1)).collect();
    format!("Notes from earlier attempts:\n{}\n", lines.join("\n"))
}

/// What the reflection entries need to know about one pair.
struct PairInfo {
    pair: ExperiencePair,
    plan_insight: &'static str,
    segments: Vec<(String, &'static str, usize)>,
    negative_subgoals: Vec<String>,
}

fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// ADD the insight if the store lacks it, otherwise UPVOTE it.
fn insight_edit(store: &InsightStore, text: &str) -> String {
    match store.insights().iter().position(|i| i.text == text) {
        Some(pos) => format!("UPVOTE {}", pos + 1),
        None => format!("ADD {text}"),
    }
}

fn apply_answer(store: &mut InsightStore, answer: &str) {
    for edit in store.parse_edits(answer).expect("fixture edits parse") {
        let _ = store.apply_edit(edit);
    }
}

fn keep_answer(store: &InsightStore, text: &str) -> String {
    match store.insights().iter().position(|i| i.text == text) {
        Some(pos) => format!("KEEP {}", pos + 1),
        None => "KEEP".into(),
    }
}

/// Entries answering every reflection call `run_h2r` makes on `infos`.
fn reflection_entries(b: &mut ScriptBuilder, infos: &[PairInfo]) {
    let mut high = InsightStore::default();
    let mut low = InsightStore::default();
    for info in infos {
        let pair = &info.pair;
        let goals: Vec<String> = info.segments.iter().map(|(g, _, _)| g.clone()).collect();
        b.add(
            RoleTag::SubgoalInference,
            vec![format!("{}Trajectory:\n{}Subgoals:", task_part(&pair.task), render_trajectory(&pair.positive))],
            numbered(&goals),
        );
        if let Some(neg) = pair.negative.as_ref().filter(|n| !n.is_empty()) {
            b.add(
                RoleTag::SubgoalInference,
                vec![format!("{}Trajectory:\n{}Subgoals:", task_part(&pair.task), render_trajectory(neg))],
                numbered(&info.negative_subgoals),
            );
        }
        let answer = b.add_or_reuse(
            RoleTag::HighInsight,
            vec![task_part(&pair.task)],
            insight_edit(&high, info.plan_insight),
        );
        apply_answer(&mut high, &answer);
        let mut start = 0;
        let mut ranges = Vec::new();
        for (j, (_, _, len)) in info.segments.iter().enumerate() {
            ranges.push(format!("g{}: steps {}-{}", j + 1, start, start + len - 1));
            start += len;
        }
        b.add(RoleTag::Partition, vec![format!("{}Subgoals:", task_part(&pair.task))], ranges.join("\n"));
        let mut start = 0;
        for (j, (goal, insight, len)) in info.segments.iter().enumerate() {
            let span = SubTrajectorySpan::new(j, start, start + len - 1);
            start += len;
            let steps = render_steps(pair.positive.slice(&span));
            let answer = b.add_or_reuse(
                RoleTag::LowInsight,
                vec![format!("Subgoal: {goal}\nSuccessful steps for this subgoal:\n{steps}")],
                insight_edit(&low, insight),
            );
            apply_answer(&mut low, &answer);
        }
    }
    for info in infos {
        b.add(
            RoleTag::Grounding,
            vec![format!("Memory unit:\ntask: {}\n", info.pair.task.description)],
            keep_answer(&high, info.plan_insight),
        );
        for (goal, insight, _) in &info.segments {
            b.add(RoleTag::Grounding, vec![format!("Memory unit:\nsubgoal: {goal}\n")], keep_answer(&low, insight));
        }
    }
}

fn naive_texts<D: Domain>(task: &Task, seed: u64) -> Result<Vec<String>, EnvError> {
    let mut env = D::fresh();
    env.reset(task, seed)?;
    Ok(env.plan(PlanStyle::Naive).into_iter().map(|sg| sg.text).collect())
}

/// Everything needed to run one environment end to end on the scripted
/// backend.
#[derive(Debug, Clone)]
pub struct EnvFixture {
    pub train: Vec<Task>,
    pub test: Vec<Task>,
    pub script: ScriptFile,
    /// Pairs the collect stage is expected to produce.
    pub expected_pairs: Vec<ExperiencePair>,
}

fn env_fixture_for<D: Domain>(spec: &EnvSpec, p: &FixtureParams) -> Result<EnvFixture, EnvError> {
    let (train, test) = generate_tasks(spec, p.task_seed, p.n_train, p.n_test)?;
    let budget = spec.step_budget;
    let mut b = ScriptBuilder::default();

    // collect stage: careless first attempt where that fails, careful retry
    let mut infos = Vec::new();
    for task in &train {
        let careless = simulate::<D>(task, p.seed, budget, SimMode::Train(Care::Careless))?;
        let careful = simulate::<D>(task, p.seed, budget, SimMode::Train(Care::Careful))?;
        let attempts: Vec<&Sim> = if careless.trajectory.outcome.is_success() {
            vec![&careful]
        } else {
            vec![&careless, &careful]
        };
        let mut notes: Vec<String> = Vec::new();
        for (i, sim) in attempts.iter().enumerate() {
            for call in &sim.exec_calls {
                let mut parts = vec![task_part(task), exec_part(call)];
                if !notes.is_empty() {
                    parts.push(notes_part(&notes));
                }
                b.add(RoleTag::Executor, parts, call.response.clone());
            }
            if i + 1 < attempts.len() {
                let note = D::reflexion_note(task).to_string();
                b.add(RoleTag::Reflexion, vec![format!("{}Trajectory:\n", task_part(task))], note.clone());
                notes.push(note);
            }
        }
        assert!(careful.trajectory.outcome.is_success(), "oracle fails on {}", task.description);
        let negative = (attempts.len() > 1).then(|| careless.trajectory.clone());
        infos.push(PairInfo {
            pair: ExperiencePair {
                task: task.clone(),
                positive: careful.trajectory.clone(),
                negative,
            },
            plan_insight: D::plan_insight(task),
            segments: careful.segments.clone(),
            negative_subgoals: naive_texts::<D>(task, p.seed)?,
        });
    }

    reflection_entries(&mut b, &infos);

    // eval stage: every planner/executor combination. Executor entries are
    // held back so that keys shared by calls needing different actions can
    // be widened with the trajectory.
    let mut exec_entries: Vec<(Vec<String>, String, String)> = Vec::new();
    for (task, &seed) in test.iter().flat_map(|t| p.eval_seeds.iter().map(move |s| (t, s))) {
        for style in [PlanStyle::Informed, PlanStyle::Naive] {
            for care in [Care::Careful, Care::Careless] {
                let sim = simulate::<D>(task, seed, budget, SimMode::Test(style, care))?;
                for call in &sim.plan_calls {
                    let mut parts = vec![format!(
                        "{}Planning history:\n{}\nRelevant planning experience:",
                        task_part(task),
                        call.history
                    )];
                    if style == PlanStyle::Informed {
                        parts.push(D::plan_insight(task).to_string());
                    }
                    b.add(RoleTag::Planner, parts, call.response.clone());
                }
                for call in &sim.exec_calls {
                    let mut parts = vec![task_part(task), exec_part(call)];
                    if care == Care::Careful {
                        parts.push(call.insight.expect("test-mode calls know their operation").to_string());
                    }
                    exec_entries.push((parts, call.context.clone(), call.response.clone()));
                }
            }
        }
    }
    let mut answers: HashMap<String, Vec<&str>> = HashMap::new();
    for (parts, _, response) in &exec_entries {
        let seen = answers.entry(parts.join(KEY_SEPARATOR)).or_default();
        if !seen.contains(&response.as_str()) {
            seen.push(response);
        }
    }
    for (mut parts, context, response) in exec_entries.iter().cloned() {
        if answers[&parts.join(KEY_SEPARATOR)].len() > 1 {
            parts.insert(1, context);
        }
        b.add(RoleTag::Executor, parts, response);
    }

    Ok(EnvFixture {
        train,
        test,
        script: b.finish(),
        expected_pairs: infos.into_iter().map(|i| i.pair).collect(),
    })
}

pub fn env_fixture(name: EnvName, params: &FixtureParams) -> Result<EnvFixture, EnvError> {
    let spec = EnvSpec::for_name(name);
    match name {
        EnvName::TextHouse => env_fixture_for::<TextHouse>(&spec, params),
        EnvName::GripperWorld => env_fixture_for::<GripperWorld>(&spec, params),
    }
}

/// Experience pairs plus the script answering `run_h2r` on them.
#[derive(Debug, Clone)]
pub struct ReflectFixture {
    pub experiences: Vec<ExperiencePair>,
    pub script: ScriptFile,
}

/// Household pairs whose failure, when there is one, comes from a careless
/// executor or else a naive planner. Plain put tasks get no failure.
pub fn reflect_fixture(params: &FixtureParams) -> Result<ReflectFixture, EnvError> {
    let spec = EnvSpec::text_house();
    let (train, _) = generate_tasks(&spec, params.task_seed, params.n_train, 0)?;
    let budget = spec.step_budget;
    let mut infos = Vec::new();
    for task in &train {
        let positive = simulate::<TextHouse>(task, params.seed, budget, SimMode::Train(Care::Careful))?;
        let careless = simulate::<TextHouse>(task, params.seed, budget, SimMode::Train(Care::Careless))?;
        let naive = simulate::<TextHouse>(task, params.seed, budget, SimMode::Test(PlanStyle::Naive, Care::Careful))?;
        let negative = if !careless.trajectory.outcome.is_success() {
            Some(careless.trajectory)
        } else if !naive.trajectory.outcome.is_success() {
            Some(naive.trajectory)
        } else {
            None
        };
        infos.push(PairInfo {
            pair: ExperiencePair {
                task: task.clone(),
                positive: positive.trajectory,
                negative,
            },
            plan_insight: TextHouse::plan_insight(task),
            segments: positive.segments,
            negative_subgoals: naive_texts::<TextHouse>(task, params.seed)?,
        });
    }
    let mut b = ScriptBuilder::default();
    reflection_entries(&mut b, &infos);
    Ok(ReflectFixture {
        experiences: infos.into_iter().map(|i| i.pair).collect(),
        script: b.finish(),
    })
}

/// Config text for a bundled environment fixture. Paths are relative to
/// the fixture directory.
pub fn env_config_text(name: EnvName, p: &FixtureParams) -> String {
    format!(
        "# scripted fixture for {name}\n\
         env = {name}\n\
         task_seed = {}\n\
         seeds = {}\n\
         n_train = {}\n\
         n_test = {}\n\
         backend = scripted\n\
         script = script.json\n\
         encoder = hashing\n\
         encoder_dim = 256\n\
         k_high = 2\n\
         k_low = 2\n\
         max_retries = 3\n\
         run_dir = run\n\
         workers = 1\n",
        p.task_seed,
        p.eval_seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        p.n_train,
        p.n_test
    )
}

/// Every bundled fixture file as (path relative to the fixtures
/// directory, contents).
pub fn bundle_files() -> Result<Vec<(String, String)>, EnvError> {
    let mut files = Vec::new();
    for (name, p) in [(EnvName::TextHouse, TEXT_HOUSE_PARAMS), (EnvName::GripperWorld, GRIPPER_PARAMS)] {
        let f = env_fixture(name, &p)?;
        files.push((format!("{name}/config.txt"), env_config_text(name, &p)));
        files.push((format!("{name}/script.json"), f.script.to_json()));
    }
    let r = reflect_fixture(&REFLECT8_PARAMS)?;
    files.push((
        format!("reflect8/{}", crate::reflection::EXPERIENCES_FILE),
        crate::reflection::experiences_to_string(EnvName::TextHouse.as_str(), &r.experiences),
    ));
    files.push(("reflect8/script.json".into(), r.script.to_json()));
    Ok(files)
}
