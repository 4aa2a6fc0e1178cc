//! Property tests for the invariants each module promises.

use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use h2r::agent::{Agent, Memories, Mode};
use h2r::embedding::{Encoder, HashingEncoder};
use h2r::envs::{generate_tasks, make_env, EnvName, EnvSpec};
use h2r::llm::{BackendError, CompletionRequest, LanguageModel, RoleTag, ScriptedBackend, TemplateSet};
use h2r::memory::{HighLevelUnit, Level, MemoryComponent};
use h2r::reflection::{experiences_from_str, run_h2r};
use h2r::types::{render_trajectory, validate_partition, SubTrajectorySpan, Subgoal, SubgoalSequence, Trajectory};

fn enc() -> Arc<dyn Encoder<f64>> {
    Arc::new(HashingEncoder::default())
}

fn trajectory(steps: &[(String, String)]) -> Trajectory {
    let mut t = Trajectory::new("t");
    for (a, o) in steps {
        t.push(a.clone(), o.clone());
    }
    t
}

fn step_text() -> impl Strategy<Value = (String, String)> {
    ("[a-z]{1,6}( [a-z0-9]{1,6}){0,2}", "[A-Za-z .]{0,12}(\n[A-Za-z .]{1,12})?")
}

proptest! {
    #[test]
    fn valid_partitions_concatenate_to_the_trajectory(
        steps in prop::collection::vec(step_text(), 1..20),
        cut_seed in any::<u64>(),
        parts in 1usize..6,
    ) {
        let t = trajectory(&steps);
        let parts = parts.min(t.len());
        let mut rng = ChaCha8Rng::seed_from_u64(cut_seed);
        let mut cuts: Vec<usize> = (1..t.len()).collect();
        while cuts.len() > parts - 1 {
            cuts.remove(rng.random_range(0..cuts.len()));
        }
        let mut spans = Vec::new();
        let mut start = 0;
        for (i, end) in cuts.iter().chain(std::iter::once(&t.len())).enumerate() {
            spans.push(SubTrajectorySpan::new(i, start, end - 1));
            start = *end;
        }
        let goals = SubgoalSequence::new((0..parts).map(|i| Subgoal::new(format!("g{i}")).unwrap()).collect()).unwrap();
        prop_assert!(validate_partition(&t, &spans, &goals).is_ok());
        let joined: Vec<_> = spans.iter().flat_map(|s| t.slice(s).iter().cloned()).collect();
        prop_assert_eq!(joined, t.steps.clone());
    }

    #[test]
    fn render_trajectory_is_injective(
        a in prop::collection::vec(step_text(), 0..6),
        b in prop::collection::vec(step_text(), 0..6),
    ) {
        let (ta, tb) = (trajectory(&a), trajectory(&b));
        prop_assert_eq!(render_trajectory(&ta) == render_trajectory(&tb), ta.steps == tb.steps);
    }

    #[test]
    fn template_rendering_keeps_slot_values_whole(
        task in "[ -~]{0,200}",
        trajectory in "[ -~\n]{0,400}",
    ) {
        let set = TemplateSet::builtin();
        let out = set.render(RoleTag::Reflexion, &[("task", &task), ("trajectory", &trajectory)]).unwrap();
        prop_assert!(out.contains(&task));
        prop_assert!(out.contains(&trajectory));
    }

    #[test]
    fn retrieval_is_pure_and_self_queries_rank_first(
        descs in prop::collection::vec("[a-e]{1,3}( [a-e]{1,3}){0,3}", 1..25),
        k in 0usize..8,
        pick in any::<prop::sample::Index>(),
    ) {
        let mut m = MemoryComponent::new(Level::High, enc());
        for d in &descs {
            let g = SubgoalSequence::new(vec![Subgoal::new("g").unwrap()]).unwrap();
            m.insert(HighLevelUnit::placeholder(d.clone(), g)).unwrap();
        }
        let before = m.to_file_string();
        let target = &m.high_units().collect::<Vec<_>>()[pick.index(descs.len())].clone();
        let got = m.retrieve_high(&target.task_description, k).unwrap();
        prop_assert_eq!(got.len(), k.min(descs.len()));
        let ids: Vec<u64> = got.iter().map(|u| u.id).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), ids.len());
        if k > 0 {
            // the first hit embeds exactly like the query (bag-of-words ties
            // count as identical keys) and the lowest such id wins
            let e = enc();
            let key = e.embed(&target.task_description).unwrap();
            let first = m.high_units().find(|u| e.embed(&u.task_description).unwrap() == key).unwrap();
            prop_assert_eq!(got[0].id, first.id);
        }
        prop_assert_eq!(m.to_file_string(), before);
    }
}

// ---------------------------------------------------------------------------
// reflection over subsets of the bundled eight-pair fixture

fn reflect8() -> (Vec<h2r::reflection::ExperiencePair>, String) {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reflect8");
    let (_, pairs) = experiences_from_str(&std::fs::read_to_string(dir.join("experiences.v1")).unwrap()).unwrap();
    (pairs, std::fs::read_to_string(dir.join("script.json")).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reflection_units_are_consistent(mask in 0u16..256) {
        let (all, script) = reflect8();
        let pairs: Vec<_> = all.into_iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, p)| p).collect();
        let templates = TemplateSet::builtin();
        let backend = ScriptedBackend::from_json(&script).unwrap();
        let r = run_h2r(&backend, &templates, enc(), &pairs).unwrap();
        let again = run_h2r(&ScriptedBackend::from_json(&script).unwrap(), &templates, enc(), &pairs).unwrap();
        prop_assert_eq!(r.high.to_file_string(), again.high.to_file_string());
        prop_assert_eq!(r.low.to_file_string(), again.low.to_file_string());

        // units come pair by pair; each high unit is followed by one low unit per subgoal
        let highs: Vec<_> = r.high.high_units().collect();
        let lows: Vec<_> = r.low.low_units().collect();
        let expected_lows: usize = highs.iter().map(|h| h.subgoal_sequence.len()).sum();
        prop_assert_eq!(lows.len(), expected_lows);
        let mut li = 0;
        for h in &highs {
            let pair = pairs.iter().find(|p| p.task.description == h.task_description).unwrap();
            let mut at = 0;
            for g in h.subgoal_sequence.iter() {
                let u = lows[li];
                li += 1;
                prop_assert_eq!(&u.subgoal, g);
                let n = u.sub_trajectory.len();
                prop_assert_eq!(&pair.positive.steps[at..at + n], &u.sub_trajectory[..]);
                at += n;
            }
            prop_assert_eq!(at, pair.positive.len());
        }
        let high_ids: Vec<u64> = r.high_insights.insights().iter().map(|i| i.id).collect();
        let low_ids: Vec<u64> = r.low_insights.insights().iter().map(|i| i.id).collect();
        prop_assert!(highs.iter().all(|u| u.insight_ids.iter().all(|i| high_ids.contains(i))));
        prop_assert!(lows.iter().all(|u| u.insight_ids.iter().all(|i| low_ids.contains(i))));
    }
}

// ---------------------------------------------------------------------------
// agent loop against a model answering at random

/// Answers every request with a random pick from a pool of well-formed
/// and malformed replies, logging the roles it was asked for.
struct Chaos {
    rng: Mutex<ChaCha8Rng>,
    log: Mutex<Vec<(RoleTag, String)>>,
}

impl LanguageModel for Chaos {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let mut rng = self.rng.lock().unwrap();
        let pool: &[&str] = match request.role_tag {
            RoleTag::Planner => &["SUBGOAL: the apple is hot", "SUBGOAL: ball1 is at roomb", "DONE", "garbage"],
            _ => &["ACTION: look", "ACTION: move to roomb", "ACTION: go to fridge", "COMPLETE", "INVALID", "??"],
        };
        let answer = pool[rng.random_range(0..pool.len())].to_string();
        self.log.lock().unwrap().push((request.role_tag, answer.clone()));
        Ok(answer)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn agent_loop_invariants(seed in any::<u64>(), budget in 0usize..25, gripper in any::<bool>(), train in any::<bool>()) {
        let name = if gripper { EnvName::GripperWorld } else { EnvName::TextHouse };
        let (tasks, _) = generate_tasks(&EnvSpec::for_name(name), seed % 5, 2, 0).unwrap();
        let task = &tasks[(seed % 2) as usize];
        let model = Chaos { rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)), log: Mutex::new(Vec::new()) };
        let templates = TemplateSet::builtin();
        let agent = Agent::new(&model, &templates);
        let mode = if train { Mode::Train } else { Mode::Test };
        let mut env = make_env(name);
        let r = agent.run_episode::<f64>(env.as_mut(), task, seed, &Memories::none(), mode, budget, &[]).unwrap();

        prop_assert!(r.steps_used <= budget);
        prop_assert_eq!(r.steps_used, r.trajectory.len());
        prop_assert_eq!((r.high_retrievals, r.low_retrievals), (0, 0));
        let log = model.log.lock().unwrap();
        prop_assert_eq!(r.model_calls, log.len());
        if train {
            prop_assert!(log.iter().all(|(role, _)| *role == RoleTag::Executor));
            prop_assert!(r.subgoals_dispatched.len() <= 1);
            prop_assert!(r.subgoals_dispatched.iter().all(|g| g.as_str() == task.description));
        } else {
            // after an INVALID the executor is not asked again about the same subgoal
            for w in log.windows(2) {
                if w[0] == (RoleTag::Executor, "INVALID".to_string()) {
                    prop_assert_eq!(w[1].0, RoleTag::Planner);
                }
            }
        }
    }
}
