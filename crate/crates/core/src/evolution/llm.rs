//! Language-model backend abstraction and a scripted in-memory backend.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Generator,
    ShortReflector,
    Crossover,
    LongReflector,
    Mutation,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Generator,
        Role::ShortReflector,
        Role::Crossover,
        Role::LongReflector,
        Role::Mutation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::ShortReflector => "short-reflector",
            Role::Crossover => "crossover",
            Role::LongReflector => "long-reflector",
            Role::Mutation => "mutation",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("no scripted or recorded completion left for {0:?}")]
    Exhausted(Role),
    #[error("call budget of {0} completions exceeded")]
    BudgetExceeded(usize),
    #[error("empty completion")]
    Empty,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("configuration error: {0}")]
    Configuration(String),
}

pub trait LlmBackend {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &mut B {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        (**self).complete(role, system, user)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        (**self).complete(role, system, user)
    }
}

/// Per-role queues of canned completions. When a role's queue is empty its
/// fallback (if any) is repeated forever.
#[derive(Debug, Clone, Default)]
pub struct ScriptedLlm {
    queues: [VecDeque<String>; 5],
    fallback: [Option<String>; 5],
    max_calls: Option<usize>,
    calls: usize,
    /// Every `(role, system, user)` prompt received, in order.
    pub transcript: Vec<(Role, String, String)>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every role answers `text` forever.
    pub fn echo(text: &str) -> Self {
        let mut llm = Self::new();
        for role in Role::ALL {
            llm.fallback[role.index()] = Some(text.into());
        }
        llm
    }

    pub fn push(mut self, role: Role, text: impl Into<String>) -> Self {
        self.queues[role.index()].push_back(text.into());
        self
    }

    pub fn with_fallback(mut self, role: Role, text: impl Into<String>) -> Self {
        self.fallback[role.index()] = Some(text.into());
        self
    }

    pub fn with_max_calls(mut self, max_calls: usize) -> Self {
        self.max_calls = Some(max_calls);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl LlmBackend for ScriptedLlm {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        if let Some(max) = self.max_calls {
            if self.calls >= max {
                return Err(LlmError::BudgetExceeded(max));
            }
        }
        let text = match self.queues[role.index()].pop_front() {
            Some(t) => t,
            None => self.fallback[role.index()].clone().ok_or(LlmError::Exhausted(role))?,
        };
        self.calls += 1;
        self.transcript.push((role, system.into(), user.into()));
        if text.trim().is_empty() {
            return Err(LlmError::Empty);
        }
        Ok(text)
    }
}
