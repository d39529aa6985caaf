//! Language-model backends that need IO: replay of recorded transcripts and
//! a live chat-completions client.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use anyhow::{Context, Result};
use contractlab_core::evolution::{LlmBackend, LlmError, Role, ScriptedLlm};
use serde::{Deserialize, Serialize};

/// One recorded exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub system: String,
    pub user: String,
    pub completion: String,
}

/// Answers from a transcript. Exchanges are matched on `(role, system,
/// user)` and consumed in recorded order; nothing goes over the network.
#[derive(Debug, Clone, Default)]
pub struct ReplayLlm {
    entries: HashMap<(Role, String, String), VecDeque<String>>,
}

impl ReplayLlm {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut map: HashMap<_, VecDeque<String>> = HashMap::new();
        for e in entries {
            map.entry((e.role, e.system, e.user)).or_default().push_back(e.completion);
        }
        Self { entries: map }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).with_context(|| format!("opening transcript {}", path.display()))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line).with_context(|| format!("{}:{}: bad transcript entry", path.display(), i + 1))?,
            );
        }
        Ok(Self::from_entries(entries))
    }
}

impl LlmBackend for ReplayLlm {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        self.entries
            .get_mut(&(role, system.to_string(), user.to_string()))
            .and_then(VecDeque::pop_front)
            .ok_or(LlmError::Exhausted(role))
    }
}

/// Wraps a backend and appends every successful exchange to a JSONL file.
pub struct RecordingLlm<B> {
    inner: B,
    out: fs::File,
}

impl<B> RecordingLlm<B> {
    pub fn create(inner: B, path: &Path) -> Result<Self> {
        let out = fs::File::create(path).with_context(|| format!("creating transcript {}", path.display()))?;
        Ok(Self { inner, out })
    }
}

impl<B: LlmBackend> LlmBackend for RecordingLlm<B> {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        let completion = self.inner.complete(role, system, user)?;
        let entry = TranscriptEntry {
            role,
            system: system.into(),
            user: user.into(),
            completion: completion.clone(),
        };
        let line = serde_json::to_string(&entry).expect("entry serialises");
        writeln!(self.out, "{line}").map_err(|e| LlmError::Transport(format!("writing transcript: {e}")))?;
        Ok(completion)
    }
}

/// Caps the number of completions any backend may return.
pub struct BudgetedLlm<B> {
    inner: B,
    max_calls: usize,
    calls: usize,
}

impl<B> BudgetedLlm<B> {
    pub fn new(inner: B, max_calls: usize) -> Self {
        Self {
            inner,
            max_calls,
            calls: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl<B: LlmBackend> LlmBackend for BudgetedLlm<B> {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        if self.calls >= self.max_calls {
            return Err(LlmError::BudgetExceeded(self.max_calls));
        }
        self.calls += 1;
        self.inner.complete(role, system, user)
    }
}

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4.1-mini-2025-04-14";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub temperature: Option<f64>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            model: DEFAULT_MODEL.into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            attempts: 3,
            initial_backoff: Duration::from_secs(2),
            temperature: None,
        }
    }
}

/// Chat-completions client. The key is read once at construction and never
/// logged.
pub struct LiveLlm {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LiveLlm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveLlm")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl LiveLlm {
    /// Fails with a configuration error if the key variable is unset or
    /// empty, before any request is made.
    pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::Configuration(format!("environment variable {} is not set", config.api_key_env)))?;
        if config.attempts == 0 {
            return Err(LlmError::Configuration("at least one attempt is required".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .new_agent();
        Ok(Self { config, api_key, agent })
    }

    fn request_once(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Transport(format!("bad response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if text.trim().is_empty() {
            return Err(LlmError::Empty);
        }
        Ok(text)
    }
}

impl LlmBackend for LiveLlm {
    fn complete(&mut self, role: Role, system: &str, user: &str) -> Result<String, LlmError> {
        let mut backoff = self.config.initial_backoff;
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 1..=self.config.attempts {
            match self.request_once(system, user) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    log::warn!("{} completion attempt {attempt} failed: {e}", role.as_str());
                    last = e;
                }
            }
            if attempt < self.config.attempts {
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(last)
    }
}

/// Scripted backend from a JSON file `{"<role>": ["...", ...], ...}`; the
/// last entry of each role repeats once its queue is drained.
pub fn scripted_from_file(path: &Path) -> Result<ScriptedLlm> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let script: HashMap<Role, Vec<String>> =
        serde_json::from_str(&text).with_context(|| format!("parsing mock script {}", path.display()))?;
    let mut llm = ScriptedLlm::new();
    for (role, answers) in script {
        if let Some(last) = answers.last() {
            llm = llm.with_fallback(role, last.clone());
        }
        for a in answers {
            llm = llm.push(role, a);
        }
    }
    Ok(llm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_matches_recorded_pairs() {
        let mut llm = ReplayLlm::from_entries([
            TranscriptEntry {
                role: Role::Generator,
                system: "s".into(),
                user: "u".into(),
                completion: "A".into(),
            },
            TranscriptEntry {
                role: Role::Generator,
                system: "s".into(),
                user: "u".into(),
                completion: "B".into(),
            },
        ]);
        assert_eq!(llm.complete(Role::Generator, "s", "u").unwrap(), "A");
        assert_eq!(llm.complete(Role::Generator, "s", "u").unwrap(), "B");
        assert_eq!(llm.complete(Role::Generator, "s", "u"), Err(LlmError::Exhausted(Role::Generator)));
        assert!(llm.complete(Role::Mutation, "s", "u").is_err());
    }

    #[test]
    fn live_without_key_is_a_configuration_error() {
        let config = LiveConfig {
            api_key_env: "CONTRACTLAB_TEST_UNSET_KEY_VARIABLE".into(),
            ..LiveConfig::default()
        };
        assert!(matches!(LiveLlm::new(config), Err(LlmError::Configuration(_))));
    }

    #[test]
    fn budget_wrapper() {
        let mut llm = BudgetedLlm::new(ScriptedLlm::echo("x"), 1);
        assert!(llm.complete(Role::Generator, "", "").is_ok());
        assert_eq!(llm.complete(Role::Generator, "", ""), Err(LlmError::BudgetExceeded(1)));
        assert_eq!(llm.calls(), 1);
    }
}
