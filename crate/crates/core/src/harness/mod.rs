//! Command implementations behind the `h2r` binary: collect training
//! experience, reflect it into memory, evaluate ablations and summarize.

pub mod config;
pub mod metrics;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use thiserror::Error;

pub use config::{BackendKind, ConfigError, EncoderKind, RunConfig};
pub use metrics::{format_percent, summary_table, Ablation, EvalMetrics, SuccessRate};

use crate::agent::{Agent, AgentError, Collection, EpisodeResult, Memories, Mode};
use crate::embedding::{Encoder, HashingEncoder, HttpEncoder, HttpEncoderConfig};
use crate::envs::{generate_tasks, make_env, EnvError};
use crate::llm::{ChatBackend, ChatBackendConfig, LanguageModel, ScriptedBackend, TemplateSet};
use crate::memory::{Level, MemoryComponent, MemoryError, HIGH_MEMORY_FILE, LOW_MEMORY_FILE};
use crate::reflection::{
    experiences_from_str, experiences_to_string, run_h2r, ReflectionError, ReflectionReport, EXPERIENCES_FILE,
};
use crate::retry::RetryPolicy;
use crate::types::Task;

pub const COLLECT_REPORT_FILE: &str = "collect_report.txt";
pub const REFLECTION_REPORT_FILE: &str = "reflection_report.txt";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("missing prerequisite file {}", .0.display())]
    Missing(PathBuf),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status for this error. Failures that are neither
    /// configuration nor missing-file problems count as backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Backend(_) | HarnessError::Runtime(_) => 2,
            HarnessError::Missing(_) => 3,
        }
    }
}

impl From<AgentError> for HarnessError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Backend(b) => HarnessError::Backend(b.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<ReflectionError> for HarnessError {
    fn from(e: ReflectionError) -> Self {
        match e {
            ReflectionError::Backend(b) => HarnessError::Backend(b.to_string()),
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Runtime(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn read_required(path: &Path) -> Result<String, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::Missing(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| io(path, e))
}

fn api_key(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

pub fn build_model(cfg: &RunConfig) -> Result<Box<dyn LanguageModel>, HarnessError> {
    match cfg.backend {
        BackendKind::Scripted => {
            let path = cfg.script.as_ref().ok_or_else(|| ConfigError::Invalid("no script path".into()))?;
            let text = read_required(path)?;
            let backend = ScriptedBackend::from_json(&text)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            Ok(Box::new(backend))
        }
        BackendKind::Remote => Ok(Box::new(ChatBackend::new(ChatBackendConfig {
            endpoint: cfg.llm_endpoint.clone(),
            model: cfg.llm_model.clone(),
            api_key: api_key(&cfg.llm_api_key_env),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }))),
    }
}

pub fn build_encoder(cfg: &RunConfig) -> Arc<dyn Encoder<f64>> {
    match cfg.encoder {
        EncoderKind::Hashing => Arc::new(HashingEncoder::new(cfg.encoder_dim)),
        EncoderKind::Http => Arc::new(HttpEncoder::new(HttpEncoderConfig {
            endpoint: cfg.embed_endpoint.clone(),
            model: cfg.embed_model.clone(),
            api_key: api_key(&cfg.llm_api_key_env),
            dimension: cfg.encoder_dim,
            timeout: Duration::from_secs(60),
            retry: RetryPolicy::default(),
        })),
    }
}

pub fn build_templates(cfg: &RunConfig) -> Result<TemplateSet, HarnessError> {
    match &cfg.templates_dir {
        Some(dir) => TemplateSet::load_dir(dir).map_err(|e| ConfigError::Invalid(e.to_string()).into()),
        None => Ok(TemplateSet::builtin()),
    }
}

fn splits(cfg: &RunConfig) -> Result<(Vec<Task>, Vec<Task>), HarnessError> {
    generate_tasks(&cfg.spec(), cfg.task_seed, cfg.n_train, cfg.n_test).map_err(|e| match e {
        EnvError::TooManyTasks { .. } | EnvError::UnknownTaskType { .. } => ConfigError::Invalid(e.to_string()).into(),
        other => HarnessError::Runtime(other.to_string()),
    })
}

/// Runs the training split with reflexion retries and writes the
/// experience pairs.
pub fn cmd_collect(cfg: &RunConfig) -> Result<Collection, HarnessError> {
    let (train, _) = splits(cfg)?;
    if train.is_empty() {
        warn!("training split is empty; writing an empty experience file");
    }
    let model = build_model(cfg)?;
    let templates = build_templates(cfg)?;
    let agent = Agent::new(model.as_ref(), &templates);
    let mut env = make_env(cfg.env);
    let collection =
        agent.collect_experiences(env.as_mut(), &train, cfg.seeds[0], cfg.max_retries, cfg.spec().step_budget)?;
    write(&cfg.run_dir.join(EXPERIENCES_FILE), &experiences_to_string(cfg.env.as_str(), &collection.pairs))?;
    let report = format!(
        "train_tasks={}\npairs={}\nunsolved={}\nattempts={}\nmax_steps_used={}\n",
        train.len(),
        collection.pairs.len(),
        collection.unsolved.len(),
        collection.attempts,
        collection.max_steps_used
    );
    write(&cfg.run_dir.join(COLLECT_REPORT_FILE), &report)?;
    info!("collected {} pairs from {} tasks", collection.pairs.len(), train.len());
    Ok(collection)
}

/// Builds both memory levels from the collected experience.
pub fn cmd_reflect(cfg: &RunConfig) -> Result<ReflectionReport, HarnessError> {
    let path = cfg.run_dir.join(EXPERIENCES_FILE);
    let text = read_required(&path)?;
    let (env, pairs) = experiences_from_str(&text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
    if env != cfg.env.as_str() {
        return Err(ConfigError::Invalid(format!("experiences were collected on {env}, config says {}", cfg.env)).into());
    }
    let model = build_model(cfg)?;
    let templates = build_templates(cfg)?;
    let reflection = run_h2r(model.as_ref(), &templates, build_encoder(cfg), &pairs)?;
    let save = |m: &MemoryComponent<f64>, name: &str| -> Result<(), HarnessError> {
        let p = cfg.run_dir.join(name);
        m.save(&p).map_err(|e| HarnessError::Runtime(format!("{}: {e}", p.display())))
    };
    save(&reflection.high, HIGH_MEMORY_FILE)?;
    save(&reflection.low, LOW_MEMORY_FILE)?;
    write(&cfg.run_dir.join(REFLECTION_REPORT_FILE), &reflection.report.to_text())?;
    info!("reflection done: {}", reflection.report.to_text().replace('\n', " "));
    Ok(reflection.report)
}

fn load_memory(cfg: &RunConfig, level: Level, encoder: &Arc<dyn Encoder<f64>>) -> Result<MemoryComponent<f64>, HarnessError> {
    let name = match level {
        Level::High => HIGH_MEMORY_FILE,
        Level::Low => LOW_MEMORY_FILE,
    };
    let path = cfg.run_dir.join(name);
    let text = read_required(&path)?;
    MemoryComponent::from_file_str(&text, encoder.clone()).map_err(|e| match e {
        MemoryError::Embed(e) => HarnessError::Backend(e.to_string()),
        other => HarnessError::Runtime(format!("{}: {other}", path.display())),
    })
}

/// Runs `tasks` over frozen memories, split across `workers` threads.
/// Results come back in task order whatever the worker count.
fn run_tasks(
    cfg: &RunConfig,
    agent: &Agent<'_>,
    tasks: &[Task],
    seed: u64,
    memories: &Memories<'_, f64>,
) -> Result<Vec<EpisodeResult>, HarnessError> {
    let budget = cfg.spec().step_budget;
    let run_one = |task: &Task| -> Result<EpisodeResult, AgentError> {
        let mut env = make_env(cfg.env);
        agent.run_episode(env.as_mut(), task, seed, memories, Mode::Test, budget, &[])
    };
    if cfg.workers <= 1 {
        return tasks.iter().map(|t| run_one(t).map_err(HarnessError::from)).collect();
    }
    let mut slots: Vec<Option<Result<EpisodeResult, AgentError>>> = (0..tasks.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|w| {
                let run_one = &run_one;
                scope.spawn(move || {
                    (w..tasks.len())
                        .step_by(cfg.workers)
                        .map(|i| (i, run_one(&tasks[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("evaluation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every task was assigned").map_err(HarnessError::from))
        .collect()
}

pub fn metrics_file(label: &str) -> String {
    format!("metrics_{label}.txt")
}

pub fn seed_metrics_file(label: &str, seed: u64) -> String {
    format!("metrics_{label}_seed{seed}.txt")
}

pub fn episodes_file(label: &str, seed: u64) -> String {
    format!("episodes_{label}_seed{seed}.txt")
}

/// Evaluates the test split under one ablation for every configured seed
/// and writes per-seed and pooled metrics.
pub fn cmd_eval(cfg: &RunConfig, ablation: Ablation) -> Result<EvalMetrics, HarnessError> {
    let (_, test) = splits(cfg)?;
    let encoder = build_encoder(cfg);
    let high = ablation.uses_high().then(|| load_memory(cfg, Level::High, &encoder)).transpose()?;
    let low = ablation.uses_low().then(|| load_memory(cfg, Level::Low, &encoder)).transpose()?;
    let memories = Memories {
        high: high.as_ref(),
        low: low.as_ref(),
        k_high: cfg.k_high,
        k_low: cfg.k_low,
    };
    let model = build_model(cfg)?;
    let templates = build_templates(cfg)?;
    let agent = Agent::new(model.as_ref(), &templates);
    let label = ablation.as_str();
    let mut pooled = EvalMetrics::new(label, cfg.env.as_str(), cfg.seeds.clone());
    for &seed in &cfg.seeds {
        let results = run_tasks(cfg, &agent, &test, seed, &memories)?;
        let mut m = EvalMetrics::new(label, cfg.env.as_str(), vec![seed]);
        let mut log = String::new();
        for (task, r) in test.iter().zip(&results) {
            m.record(task, r);
            let subgoals: Vec<&str> = r.subgoals_dispatched.iter().map(|g| g.as_str()).collect();
            log.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                task.id,
                task.task_type,
                if r.success { "success" } else { "failure" },
                r.steps_used,
                subgoals.join(" | ")
            ));
        }
        write(&cfg.run_dir.join(seed_metrics_file(label, seed)), &m.to_text())?;
        write(&cfg.run_dir.join(episodes_file(label, seed)), &log)?;
        pooled.merge(&m);
    }
    write(&cfg.run_dir.join(metrics_file(label)), &pooled.to_text())?;
    info!("{label}: success {} over {} episodes", pooled.success_rate_text(), pooled.episodes);
    Ok(pooled)
}

/// Merges the pooled metrics files found in `run_dir` into `summary.txt`.
pub fn cmd_report(run_dir: &Path) -> Result<String, HarnessError> {
    let mut rows = Vec::new();
    for ablation in Ablation::ALL {
        let path = run_dir.join(metrics_file(ablation.as_str()));
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| io(&path, e))?;
        rows.push(EvalMetrics::from_text(&text).map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?);
    }
    if rows.is_empty() {
        return Err(HarnessError::Missing(run_dir.join("metrics_<label>.txt")));
    }
    let table = summary_table(&rows);
    write(&run_dir.join(SUMMARY_FILE), &table)?;
    Ok(table)
}
