//! The population loop: initialise from the seed, then per epoch select
//! pairs by rank, reflect, cross over, reflect long-term, mutate the elitist
//! and keep the best candidate seen so far.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::evaluate::{evaluate_source, EvaluationContext, SolverRunner};
use super::llm::LlmBackend;
use super::prompts::{extract_code, PromptContext, PromptError, RenderedPrompt};
use super::protocol::{FailureKind, RunFailure};
use crate::model::Contract;

/// Attempts at drawing a pair with distinct fitness before falling back to
/// best and worst.
pub const PAIR_RETRIES: usize = 20;
pub const SHORT_WORD_BUDGET: usize = 20;
pub const LONG_WORD_BUDGET: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvolutionError {
    #[error("invalid evolution parameters: {0}")]
    InvalidParams(String),
    #[error("population has no two members with distinct fitness")]
    DegeneratePopulation,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionParams {
    /// Candidates produced by the generator before the first epoch.
    pub init_size: usize,
    /// Parents selected per epoch; half as many crossovers are made.
    pub selection_size: usize,
    /// Mutations of the elitist per epoch.
    pub mutation_count: usize,
    /// Total number of candidate evaluations.
    pub budget: usize,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        Self {
            init_size: 10,
            selection_size: 10,
            mutation_count: 2,
            budget: 200,
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |msg: &str| Err(EvolutionError::InvalidParams(msg.into()));
        if self.init_size == 0 {
            return bad("init_size must be positive");
        }
        if self.selection_size == 0 || !self.selection_size.is_multiple_of(2) {
            return bad("selection_size must be positive and even");
        }
        if self.mutation_count == 0 {
            return bad("mutation_count must be positive");
        }
        if self.budget == 0 {
            return bad("budget must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Seed,
    Init,
    Crossover,
    Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fitness {
    Unevaluated,
    Scored(f64),
    Failed(RunFailure),
}

impl Fitness {
    /// Ordering key: failures sort below every finite score.
    pub fn rank_key(&self) -> f64 {
        match self {
            Fitness::Scored(f) => *f,
            Fitness::Unevaluated | Fitness::Failed(_) => f64::NEG_INFINITY,
        }
    }

    pub fn score(&self) -> Option<f64> {
        match self {
            Fitness::Scored(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverCandidate {
    pub id: usize,
    pub source_text: String,
    pub fitness: Fitness,
    pub origin: Origin,
    pub parent_ids: Vec<usize>,
    pub epoch: usize,
    /// Source was taken from an unfenced completion.
    pub low_confidence: bool,
    /// Contract derived from the candidate's inferred setting.
    pub contract: Option<Contract>,
}

impl SolverCandidate {
    pub fn new(id: usize, source_text: String, origin: Origin, parent_ids: Vec<usize>, epoch: usize) -> Self {
        Self {
            id,
            source_text,
            fitness: Fitness::Unevaluated,
            origin,
            parent_ids,
            epoch,
            low_confidence: false,
            contract: None,
        }
    }

    /// Records the evaluation result; fitness can only be set once.
    pub fn set_fitness(&mut self, fitness: Fitness) {
        assert!(
            matches!(self.fitness, Fitness::Unevaluated),
            "fitness of candidate {} set twice",
            self.id
        );
        self.fitness = fitness;
    }
}

/// Rank weights for a population sorted best first: `n - j` for rank `j`.
pub fn rank_weights(n: usize) -> Vec<f64> {
    (0..n).map(|j| (n - j) as f64).collect()
}

/// Draws a rank in `0..n` with probability proportional to `n - rank`.
pub fn sample_rank<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    sample_weighted(&rank_weights(n), rng)
}

fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Members ordered best first; stable, so equal fitness keeps input order.
fn ranked<'a>(members: &[&'a SolverCandidate]) -> Vec<&'a SolverCandidate> {
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| b.fitness.rank_key().total_cmp(&a.fitness.rank_key()));
    sorted
}

pub fn has_distinct_fitness(members: &[&SolverCandidate]) -> bool {
    members
        .windows(2)
        .any(|w| w[0].fitness.rank_key() != w[1].fitness.rank_key())
}

/// Picks a `(better, worse)` pair with rank-proportional probabilities and
/// distinct fitness.
pub fn rank_select_pair<'a, R: Rng + ?Sized>(
    members: &[&'a SolverCandidate],
    rng: &mut R,
) -> Result<(&'a SolverCandidate, &'a SolverCandidate), EvolutionError> {
    if !has_distinct_fitness(members) {
        return Err(EvolutionError::DegeneratePopulation);
    }
    let sorted = ranked(members);
    let n = sorted.len();
    let weights = rank_weights(n);
    for _ in 0..PAIR_RETRIES {
        let i = sample_weighted(&weights, rng);
        let mut rest = weights.clone();
        rest[i] = 0.0;
        let j = sample_weighted(&rest, rng);
        let (a, b) = (sorted[i], sorted[j]);
        if a.fitness.rank_key() != b.fitness.rank_key() {
            return Ok(if a.fitness.rank_key() > b.fitness.rank_key() {
                (a, b)
            } else {
                (b, a)
            });
        }
    }
    Ok((sorted[0], sorted[n - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectionKind {
    Short,
    Long,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    pub epoch: usize,
    pub kind: ReflectionKind,
    pub text: String,
    /// Requested in the prompt; the text is not truncated to it.
    pub word_budget: usize,
    /// `(better, worse)` candidate ids behind a short reflection.
    pub pair: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElitistMark {
    pub epoch: usize,
    pub candidate_id: usize,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub seed_source: String,
    pub params: EvolutionParams,
    pub rng_seed: u64,
    pub candidates: Vec<SolverCandidate>,
    pub reflections: Vec<ReflectionRecord>,
    /// Elitist after initialisation (epoch 0) and after every epoch.
    pub elitist_trace: Vec<ElitistMark>,
    pub evaluations: usize,
    pub llm_calls: usize,
    pub epochs_completed: usize,
    /// Epochs where every parent candidate had the same fitness, so pair
    /// selection and crossover were skipped.
    pub degenerate_epochs: Vec<usize>,
    /// The run ended before the evaluation budget was spent.
    pub partial: bool,
    pub stop_reason: String,
}

impl History {
    /// SHA-256 over a canonical encoding of the full audit trail.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |bytes: &[u8]| {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        };
        feed(self.seed_source.as_bytes());
        feed(&self.rng_seed.to_le_bytes());
        for p in [
            self.params.init_size,
            self.params.selection_size,
            self.params.mutation_count,
            self.params.budget,
        ] {
            feed(&(p as u64).to_le_bytes());
        }
        for c in &self.candidates {
            feed(&(c.id as u64).to_le_bytes());
            feed(c.source_text.as_bytes());
            match &c.fitness {
                Fitness::Unevaluated => feed(b"unevaluated"),
                Fitness::Scored(f) => {
                    feed(b"scored");
                    feed(&f.to_bits().to_le_bytes());
                }
                Fitness::Failed(e) => {
                    feed(b"failed");
                    feed(e.kind.as_str().as_bytes());
                    feed(e.detail.as_bytes());
                }
            }
            feed(&[c.origin as u8, c.low_confidence as u8]);
            for p in &c.parent_ids {
                feed(&(*p as u64).to_le_bytes());
            }
            feed(&(c.epoch as u64).to_le_bytes());
            if let Some(r) = &c.contract {
                for v in r.payments() {
                    feed(&v.to_bits().to_le_bytes());
                }
            }
        }
        for r in &self.reflections {
            feed(&[r.kind as u8]);
            feed(&(r.epoch as u64).to_le_bytes());
            feed(r.text.as_bytes());
        }
        for e in &self.elitist_trace {
            feed(&(e.candidate_id as u64).to_le_bytes());
            feed(&e.fitness.to_bits().to_le_bytes());
        }
        feed(&(self.evaluations as u64).to_le_bytes());
        feed(&[self.partial as u8]);
        let out = h.finalize();
        let mut s = String::with_capacity(64);
        for b in out {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn candidate(&self, id: usize) -> &SolverCandidate {
        &self.candidates[id]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOutcome {
    /// Best candidate found; `None` if nothing was ever evaluated.
    pub elitist: Option<SolverCandidate>,
    pub history: History,
}

struct Engine<'a, L, R> {
    llm: &'a mut L,
    runner: &'a mut R,
    ctx: &'a EvaluationContext,
    prompts: PromptContext,
    history: History,
    stopped: bool,
}

impl<L: LlmBackend, R: SolverRunner> Engine<'_, L, R> {
    fn budget_left(&self) -> bool {
        !self.stopped && self.history.evaluations < self.history.params.budget
    }

    fn ask(&mut self, prompt: &RenderedPrompt) -> Option<String> {
        if self.stopped {
            return None;
        }
        match self.llm.complete(prompt.role, prompt.system, &prompt.user) {
            Ok(text) => {
                self.history.llm_calls += 1;
                Some(text)
            }
            Err(e) => {
                self.stopped = true;
                self.history.partial = true;
                self.history.stop_reason = format!("{} call failed: {e}", prompt.role.as_str());
                None
            }
        }
    }

    /// Turns a completion into an evaluated candidate and returns its id.
    fn add_candidate(&mut self, completion: &str, origin: Origin, parents: Vec<usize>, epoch: usize) -> usize {
        let id = self.history.candidates.len();
        let (source, low_confidence) = match extract_code(completion) {
            Some(code) => (code.source, code.low_confidence),
            None => (String::new(), false),
        };
        let mut cand = SolverCandidate::new(id, source, origin, parents, epoch);
        cand.low_confidence = low_confidence;
        if cand.source_text.is_empty() {
            cand.set_fitness(Fitness::Failed(RunFailure::new(FailureKind::Extraction, "no code in completion")));
        } else {
            match evaluate_source(&cand.source_text, self.runner, self.ctx) {
                Ok(ev) if ev.fitness.is_finite() => {
                    cand.contract = Some(ev.solution.contract);
                    cand.set_fitness(Fitness::Scored(ev.fitness));
                }
                Ok(ev) => cand.set_fitness(Fitness::Failed(RunFailure::new(
                    FailureKind::Design,
                    format!("non-finite fitness {}", ev.fitness),
                ))),
                Err(f) => cand.set_fitness(Fitness::Failed(f)),
            }
        }
        self.history.evaluations += 1;
        self.history.candidates.push(cand);
        id
    }

    /// Best of `ids`, keeping `current` unless strictly beaten; earlier ids
    /// win ties.
    fn best(&self, current: Option<usize>, ids: &[usize]) -> Option<usize> {
        let key = |id: usize| self.history.candidates[id].fitness.rank_key();
        let mut best = current;
        for &id in ids {
            best = match best {
                Some(b) if key(id) <= key(b) => Some(b),
                _ => Some(id),
            };
        }
        best
    }

    fn mark(&mut self, epoch: usize, elitist: Option<usize>) {
        if let Some(id) = elitist {
            let fitness = self.history.candidates[id].fitness.rank_key();
            self.history.elitist_trace.push(ElitistMark {
                epoch,
                candidate_id: id,
                fitness,
            });
        }
    }

    fn source(&self, id: usize) -> String {
        self.history.candidates[id].source_text.clone()
    }
}

/// Runs the evolution until `params.budget` candidates have been evaluated
/// or the language model stops answering.
pub fn evolve<L: LlmBackend, R: SolverRunner>(
    seed_source: &str,
    ctx: &EvaluationContext,
    params: &EvolutionParams,
    llm: &mut L,
    runner: &mut R,
    rng_seed: u64,
) -> Result<EvolutionOutcome, EvolutionError> {
    params.validate()?;
    let request = ctx.request();
    let mut prompts = PromptContext::new(&request.v, &request.content);
    prompts.seed_func = seed_source.into();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut e = Engine {
        llm,
        runner,
        ctx,
        prompts,
        history: History {
            seed_source: seed_source.into(),
            params: *params,
            rng_seed,
            candidates: Vec::new(),
            reflections: Vec::new(),
            elitist_trace: Vec::new(),
            evaluations: 0,
            llm_calls: 0,
            epochs_completed: 0,
            degenerate_epochs: Vec::new(),
            partial: false,
            stop_reason: String::new(),
        },
        stopped: false,
    };

    let init_prompt = e.prompts.generator()?;
    let mut omega_old = Vec::new();
    for _ in 0..params.init_size {
        if !e.budget_left() {
            break;
        }
        let Some(text) = e.ask(&init_prompt) else { break };
        omega_old.push(e.add_candidate(&text, Origin::Init, Vec::new(), 0));
    }
    let mut elitist = e.best(None, &omega_old);
    e.mark(0, elitist);

    let mut long_reflection = String::new();
    let mut epoch = 0;
    while e.budget_left() {
        epoch += 1;
        let before = e.history.evaluations;
        let mut omega_new: Vec<usize> = Vec::new();
        let mut thetas: Vec<String> = Vec::new();

        let members: Vec<&SolverCandidate> = omega_old.iter().map(|&i| &e.history.candidates[i]).collect();
        if has_distinct_fitness(&members) {
            for _ in 0..params.selection_size / 2 {
                if !e.budget_left() {
                    break;
                }
                let members: Vec<&SolverCandidate> = omega_old.iter().map(|&i| &e.history.candidates[i]).collect();
                let (b, w) = rank_select_pair(&members, &mut rng)?;
                let (b, w) = (b.id, w.id);
                for id in [b, w] {
                    if !omega_new.contains(&id) {
                        omega_new.push(id);
                    }
                }
                let (better, worse) = (e.source(b), e.source(w));
                let prompt = e.prompts.short_reflector(&worse, &better)?;
                let Some(theta) = e.ask(&prompt) else { break };
                let theta = String::from(theta.trim());
                e.history.reflections.push(ReflectionRecord {
                    epoch,
                    kind: ReflectionKind::Short,
                    text: theta.clone(),
                    word_budget: SHORT_WORD_BUDGET,
                    pair: Some((b, w)),
                });
                let prompt = e.prompts.crossover(&worse, &better, &theta)?;
                thetas.push(theta);
                let Some(text) = e.ask(&prompt) else { break };
                omega_new.push(e.add_candidate(&text, Origin::Crossover, vec![b, w], epoch));
            }
        } else {
            e.history.degenerate_epochs.push(epoch);
        }

        if !thetas.is_empty() && !e.stopped {
            let prior = if long_reflection.is_empty() {
                String::from("None")
            } else {
                long_reflection.clone()
            };
            let prompt = e.prompts.long_reflector(&prior, &thetas.join("\n"))?;
            if let Some(text) = e.ask(&prompt) {
                long_reflection = String::from(text.trim());
                e.history.reflections.push(ReflectionRecord {
                    epoch,
                    kind: ReflectionKind::Long,
                    text: long_reflection.clone(),
                    word_budget: LONG_WORD_BUDGET,
                    pair: None,
                });
            }
        }

        if let Some(elite) = elitist {
            let reflection = if long_reflection.is_empty() {
                String::from("None")
            } else {
                long_reflection.clone()
            };
            let prompt = e.prompts.mutation(&reflection, &e.source(elite))?;
            for _ in 0..params.mutation_count {
                if !e.budget_left() {
                    break;
                }
                let Some(text) = e.ask(&prompt) else { break };
                omega_new.push(e.add_candidate(&text, Origin::Mutation, vec![elite], epoch));
            }
        }

        elitist = e.best(elitist, &omega_new);
        e.mark(epoch, elitist);
        if !omega_new.is_empty() {
            omega_old = omega_new;
        }
        if e.stopped {
            break;
        }
        e.history.epochs_completed = epoch;
        if e.history.evaluations == before {
            e.stopped = true;
            e.history.partial = true;
            e.history.stop_reason = String::from("no candidate could be produced");
        }
    }
    if !e.history.partial {
        e.history.stop_reason = String::from("evaluation budget reached");
    }
    let elitist = elitist.map(|id| e.history.candidates[id].clone());
    Ok(EvolutionOutcome {
        elitist,
        history: e.history,
    })
}
