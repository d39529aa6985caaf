//! Language-model driven search over solver programs.

pub mod engine;
pub mod evaluate;
pub mod llm;
pub mod prompts;
pub mod protocol;

pub use engine::{
    evolve, rank_select_pair, EvolutionError, EvolutionOutcome, EvolutionParams, Fitness, History, Origin,
    SolverCandidate,
};
pub use evaluate::{evaluate_source, zero_shot_transfer, EvaluationContext, FitnessMode, NativeRunner, SolverRunner};
pub use llm::{LlmBackend, LlmError, Role, ScriptedLlm};
pub use prompts::{extract_code, SEED_SOURCE};
pub use protocol::{FailureKind, LogRecord, RunFailure, SandboxRequest, SandboxResponse};
