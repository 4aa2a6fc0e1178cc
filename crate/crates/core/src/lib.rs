//! Hierarchical hindsight reflection for LLM agents.
//!
//! Completed agent episodes are distilled into two memory components: a
//! high-level one keyed by task description (subgoal sequences and planning
//! insights) and a low-level one keyed by subgoal (sub-trajectories and
//! execution insights). A Planner/Executor agent retrieves from each level
//! separately at test time.

pub mod agent;
pub mod embedding;
pub mod envs;
pub mod fixture;
pub mod harness;
pub mod insight;
pub mod llm;
pub mod memory;
pub mod reflection;
pub mod retry;
pub mod types;

pub use harness::SuccessRate;

/// Embedding vector at the default precision.
pub type Embedding = embedding::EmbeddingVector<f64>;
/// Single-precision embedding, for memory-constrained stores.
pub type Embedding32 = embedding::EmbeddingVector<f32>;
/// Planning memory: task descriptions, subgoal sequences, planning insights.
pub type HighMemory = memory::MemoryComponent<f64>;
/// Execution memory: subgoals, sub-trajectories, execution insights.
pub type LowMemory = memory::MemoryComponent<f64>;
