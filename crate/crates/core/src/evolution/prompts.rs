//! Prompt templates for the five language-model roles, the seed solver
//! source, and helpers to fill templates and pull code out of completions.
//!
//! Templates are data: their wording (including the word budgets and the
//! code-fence instructions) is kept as is. Placeholders are `{name}`.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::llm::Role;
use super::protocol::LogRecord;

pub const FUNC_NAME: &str = "agent_solver";

pub const GENERATOR_SYSTEM: &str = "You are an expert in online learning contract design. Infer a valid agent setting from historical interaction logs to augment the principal’s utility under the agent’s IR and IC constraints.

Output Python code only, formatted as a Python code block: ```python ...```.";

pub const REFLECTOR_SYSTEM: &str = "You are an expert in online learning contract design. Your task is to give hints to help infer a better agent setting that not only fits all historical interaction logs but also augments the principal’s utility under the agent’s IR and IC constraints.";

pub const PROBLEM_DESC: &str = "Inferring a valid agent setting via agent_solver that satisfies all historical interaction logs between the principal and agent in the online contract design problem.";

pub const FUNC_DESC: &str = "The agent_solver function takes a principal’s reward v and historical interaction logs content as inputs.

Each log includes:
- Contract: a {len_w}-dimensional payment vector for {len_w} outcomes;
- Principal Utility: the principal’s utility under the contract (zero if the agent rejects);
- Agent Action: 1 for acceptance (expected utility ≥0) and -1 for rejection (expected utility <0).

The function returns an inferred valid agent setting as an n × ({len_w} + 1) matrix:
- n (number of actions) is chosen to sufficiently explain the data;
- Each row corresponds to one possible agent action;
- The first {len_w} columns are probabilities over the {len_w} outcomes (summing to 1);
- The final column is the nonnegative cost of performing that action.";

pub const GENERATOR_USER: &str = "Write a {func_name} function for {problem_desc}:

{func_desc}

The ‘v’ example is shown as:
{v}

The ‘content’ example is shown as:
{contract_logs}.

{seed_func}

Refer to the format of a trivial design above. Be very creative and give {func_name}_v2.
Output code only and enclose your code in a Python block:
```python ...```.";

pub const SHORT_REFLECTOR_USER: &str = "Below are two {func_name} functions for {problem_desc}:

{func_desc}

You are provided with two code versions below, where the second version performs better than the first one.

[Worse code]
{worse_code}

[Better code]
{better_code}

You respond with some hints for inferring better agent settings, based on the two code versions and using less than 20 words.";

pub const CROSSOVER_USER: &str = "Write a {func_name} function for {problem_desc}:

{func_desc}

The ‘v’ example is shown as:
{v}

The ‘content’ example is shown as:
{contract_logs}.

[Worse code]
{func_signature0}
{worse_code}

[Better code]
{func_signature1}
{better_code}

[Reflection]
{reflection}

[Improved code]
Please write an improved function {func_name}_v2, according to the reflection.";

pub const LONG_REFLECTOR_USER: &str = "Below is your prior long-term reflection on designing agent setting solver for {problem_desc}:

{prior_reflection}

Below are some newly gained insights.

{new_reflection}

Write constructive hints for inferring better agent settings, based on prior reflections and new insights, using less than 50 words.";

pub const MUTATION_USER: &str = "Write a {func_name} function for {problem_desc}:

{func_desc}

The ‘v’ example is shown as:
{v}

The ‘content’ example is shown as:
{contract_logs}.

[Prior reflection]
{reflection}

[Code]
{func_signature1}
{elitist_code}

[Improved code]
Please write a mutated function {func_name}_v2, according to the reflection.";

macro_rules! seed_function {
    () => {
        r#"def agent_solver_v1(v: np.ndarray, content: list[dict]) -> np.ndarray:
    n_candidates = 7
    m_outcomes = v.shape[0]
    L = len(content)

    def mini_lp_p(w: np.ndarray, u: float) -> np.ndarray | None:
        """Solve for agent outcome distribution p given wage vector w and utility u."""
        m = len(w)
        A_eq = [np.ones(m), v - w]
        b_eq = [1.0, u]
        bounds = [(0, 1)] * m
        res = linprog(w, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method='highs')
        return res.x if res.success else None

    # Step 1: Filter accepted contracts and solve mini LPs
    candidate_ps = []
    for log in content:
        if log['Agent Action'] == 1:
            w_i = log['Contract']
            u_i = log['Principal Utility']
            p_i = mini_lp_p(w_i, u_i)
            if p_i is not None:
                candidate_ps.append(p_i)

    if not candidate_ps:
        raise ValueError("No valid accepted logs to infer agent strategies.")

    all_p = np.array(candidate_ps)

    # Step 2: Cluster inferred p vectors
    kmeans = KMeans(n_clusters=n_candidates, random_state=0, n_init=10).fit(all_p)
    p0 = kmeans.cluster_centers_

    # Step 3: Assign each accepted log to best-fitting action
    assigns = np.full(L, -1, dtype=int)
    for i, log in enumerate(content):
        if log['Agent Action'] == 1:
            w = log['Contract']
            assigns[i] = int(np.argmax(p0 @ w))

    # Step 4: Compute IR-consistent cost for each action
    c_ir = np.zeros(n_candidates)
    for a in range(n_candidates):
        idx = np.where(assigns == a)[0]
        if idx.size > 0:
            wages = np.array([content[i]['Contract'] for i in idx]).T
            c_ir[a] = p0[a] @ wages.min(axis=1)
        else:
            c_ir[a] = 0.0

    # Step 5: Ensure rejection consistency
    rej_idx = [i for i, log in enumerate(content) if log['Agent Action'] == -1]
    if rej_idx:
        wages_rej = np.array([content[i]['Contract'] for i in rej_idx]).T
        rej_utils = p0 @ wages_rej
        c_rej = rej_utils.max(axis=1)
    else:
        c_rej = np.zeros(n_candidates)

    # Step 6: Final cost = max(IR, rejection threshold)
    c_init = np.maximum(c_ir, c_rej)

    # Step 7: Format agent setting
    agent_setting = np.hstack([p0, c_init[:, np.newaxis]])
    return agent_setting
"#
    };
}

/// The seed solver function as shown to the generator.
pub const SEED_FUNCTION: &str = seed_function!();

/// Complete, runnable seed solver source (imports included).
pub const SEED_SOURCE: &str = concat!(
    "import numpy as np\nfrom scipy.optimize import linprog\nfrom sklearn.cluster import KMeans\n\n",
    seed_function!()
);

/// Every placeholder name a template may use.
pub const PLACEHOLDERS: [&str; 15] = [
    "func_name",
    "problem_desc",
    "func_desc",
    "len_w",
    "v",
    "contract_logs",
    "seed_func",
    "worse_code",
    "better_code",
    "func_signature0",
    "func_signature1",
    "reflection",
    "prior_reflection",
    "new_reflection",
    "elitist_code",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("placeholder {{{0}}} has no value")]
    MissingPlaceholder(String),
}

/// Fills `{name}` placeholders in one left-to-right pass, so braces inside
/// substituted values are never re-expanded. Unknown brace groups are left
/// untouched; known placeholders without a value are an error.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        if !name.is_empty() && after[name_len..].starts_with('}') {
            if let Some((_, value)) = values.iter().find(|(k, _)| *k == name) {
                out.push_str(value);
                rest = &after[name_len + 1..];
                continue;
            }
            if PLACEHOLDERS.contains(&name) {
                return Err(PromptError::MissingPlaceholder(name.to_owned()));
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    Ok(out)
}

/// `def agent_solver_v{version}(...)` header line.
pub fn func_signature(version: u32) -> String {
    format!("def {FUNC_NAME}_v{version}(v: np.ndarray, content: list[dict]) -> np.ndarray:")
}

/// Python-literal rendering of a float vector.
pub fn format_vector(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Python-literal rendering of the log list.
pub fn format_logs(logs: &[LogRecord]) -> String {
    let parts: Vec<String> = logs
        .iter()
        .map(|l| {
            format!(
                "{{'Contract': {}, 'Principal Utility': {:?}, 'Agent Action': {}}}",
                format_vector(&l.contract),
                l.principal_utility,
                l.agent_action
            )
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

/// Instance-level values shared by every prompt of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptContext {
    pub func_desc: String,
    pub v: String,
    pub contract_logs: String,
    pub seed_func: String,
}

impl PromptContext {
    pub fn new(valuations: &[f64], logs: &[LogRecord]) -> Self {
        let len_w = format!("{}", valuations.len());
        let func_desc = fill_template(FUNC_DESC, &[("len_w", &len_w)]).expect("func_desc only uses len_w");
        Self {
            func_desc,
            v: format_vector(valuations),
            contract_logs: format_logs(logs),
            seed_func: SEED_FUNCTION.into(),
        }
    }

    fn base(&self) -> [(&'static str, &str); 6] {
        [
            ("func_name", FUNC_NAME),
            ("problem_desc", PROBLEM_DESC),
            ("func_desc", &self.func_desc),
            ("v", &self.v),
            ("contract_logs", &self.contract_logs),
            ("seed_func", &self.seed_func),
        ]
    }

    fn render(&self, template: &str, extra: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut values: Vec<(&str, &str)> = self.base().to_vec();
        values.extend_from_slice(extra);
        fill_template(template, &values)
    }

    pub fn generator(&self) -> Result<RenderedPrompt, PromptError> {
        Ok(RenderedPrompt::new(Role::Generator, self.render(GENERATOR_USER, &[])?))
    }

    pub fn short_reflector(&self, worse_code: &str, better_code: &str) -> Result<RenderedPrompt, PromptError> {
        let user = self.render(
            SHORT_REFLECTOR_USER,
            &[("worse_code", worse_code), ("better_code", better_code)],
        )?;
        Ok(RenderedPrompt::new(Role::ShortReflector, user))
    }

    pub fn crossover(&self, worse_code: &str, better_code: &str, reflection: &str) -> Result<RenderedPrompt, PromptError> {
        let sig0 = func_signature(0);
        let sig1 = func_signature(1);
        let user = self.render(
            CROSSOVER_USER,
            &[
                ("worse_code", worse_code),
                ("better_code", better_code),
                ("func_signature0", &sig0),
                ("func_signature1", &sig1),
                ("reflection", reflection),
            ],
        )?;
        Ok(RenderedPrompt::new(Role::Crossover, user))
    }

    pub fn long_reflector(&self, prior_reflection: &str, new_reflection: &str) -> Result<RenderedPrompt, PromptError> {
        let user = self.render(
            LONG_REFLECTOR_USER,
            &[("prior_reflection", prior_reflection), ("new_reflection", new_reflection)],
        )?;
        Ok(RenderedPrompt::new(Role::LongReflector, user))
    }

    pub fn mutation(&self, reflection: &str, elitist_code: &str) -> Result<RenderedPrompt, PromptError> {
        let sig1 = func_signature(1);
        let user = self.render(
            MUTATION_USER,
            &[
                ("reflection", reflection),
                ("func_signature1", &sig1),
                ("elitist_code", elitist_code),
            ],
        )?;
        Ok(RenderedPrompt::new(Role::Mutation, user))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub role: Role,
    pub system: &'static str,
    pub user: String,
}

impl RenderedPrompt {
    fn new(role: Role, user: String) -> Self {
        let system = match role {
            Role::Generator | Role::Crossover | Role::Mutation => GENERATOR_SYSTEM,
            Role::ShortReflector | Role::LongReflector => REFLECTOR_SYSTEM,
        };
        Self { role, system, user }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedCode {
    pub source: String,
    /// No fenced block was found and the whole completion was taken.
    pub low_confidence: bool,
}

/// Contents of the first fenced code block, or the whole text (flagged low
/// confidence) when there is none. `None` if nothing usable remains.
pub fn extract_code(completion: &str) -> Option<ExtractedCode> {
    let extracted = match completion.find("```") {
        Some(start) => {
            let after = &completion[start + 3..];
            // skip the info string (e.g. "python") up to the end of the line
            let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
            let body = &after[body_start..];
            let body = match body.find("```") {
                Some(end) => &body[..end],
                None => body,
            };
            ExtractedCode {
                source: body.trim_end_matches(['\n', '\r', ' ']).into(),
                low_confidence: false,
            }
        }
        None => ExtractedCode {
            source: completion.trim().into(),
            low_confidence: true,
        },
    };
    if extracted.source.trim().is_empty() {
        None
    } else {
        Some(extracted)
    }
}
