//! Fitness of a candidate solver: run it, check its matrix, design a
//! contract on the inferred setting, and score that contract.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::prompts::SEED_SOURCE;
use super::protocol::{setting_from_matrix, FailureKind, RunFailure, SandboxRequest};
use crate::design::{optimize_contract, ContractSolution, DesignOptions};
use crate::inference::{seed_solve, validate_setting, DEFAULT_N_HAT};
use crate::error::InferenceError;
use crate::model::{Acceptance, Contract, InteractionLog, MarketParams, OutcomeSpace, Scenario};

/// Executes candidate source on a request and returns its raw matrix.
pub trait SolverRunner {
    fn run(&mut self, source: &str, request: &SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure>;
}

impl<R: SolverRunner + ?Sized> SolverRunner for &mut R {
    fn run(&mut self, source: &str, request: &SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure> {
        (**self).run(source, request)
    }
}

impl<R: SolverRunner + ?Sized> SolverRunner for Box<R> {
    fn run(&mut self, source: &str, request: &SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure> {
        (**self).run(source, request)
    }
}

type NativeSolver = Box<dyn FnMut(&SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure>>;

/// Stand-in for the external sandbox: known source texts are mapped to
/// native solvers, anything else fails as unavailable.
pub struct NativeRunner {
    solvers: Vec<(String, NativeSolver)>,
}

impl NativeRunner {
    pub fn new() -> Self {
        Self { solvers: Vec::new() }
    }

    /// Runner that knows the seed solver source. The wire request carries no
    /// market parameters, so they are supplied here.
    pub fn with_seed(market: MarketParams) -> Self {
        Self::new().register(SEED_SOURCE, move |req| native_seed(req, &market, DEFAULT_N_HAT, 0))
    }

    pub fn register<F>(mut self, source: &str, solver: F) -> Self
    where
        F: FnMut(&SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure> + 'static,
    {
        self.solvers.push((source.trim().into(), Box::new(solver)));
        self
    }
}

impl Default for NativeRunner {
    fn default() -> Self {
        Self::new()
    }
}

impl SolverRunner for NativeRunner {
    fn run(&mut self, source: &str, request: &SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure> {
        let key = source.trim();
        match self.solvers.iter_mut().find(|(s, _)| s == key) {
            Some((_, solver)) => solver(request),
            None => Err(RunFailure::new(
                FailureKind::Unavailable,
                "no sandbox configured and no native solver for this source",
            )),
        }
    }
}

/// Decodes wire records back into logs.
pub fn logs_from_request(request: &SandboxRequest) -> Result<Vec<InteractionLog>, RunFailure> {
    request
        .content
        .iter()
        .map(|rec| {
            let acceptance = Acceptance::from_indicator(rec.agent_action.into())
                .ok_or_else(|| RunFailure::new(FailureKind::Malformed, format!("agent action {}", rec.agent_action)))?;
            let contract = Contract::new(rec.contract.clone())
                .map_err(|e| RunFailure::new(FailureKind::Malformed, format!("{e}")))?;
            InteractionLog::new(contract, rec.principal_utility, acceptance)
                .map_err(|e| RunFailure::new(FailureKind::Malformed, format!("{e}")))
        })
        .collect()
}

/// The native seed solver behind the wire interface.
pub fn native_seed(
    request: &SandboxRequest,
    market: &MarketParams,
    n_hat: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<f64>>, RunFailure> {
    let outcomes = OutcomeSpace::from_valuations(request.v.clone())
        .map_err(|e| RunFailure::new(FailureKind::Malformed, format!("{e}")))?;
    let logs = logs_from_request(request)?;
    match seed_solve(&logs, &outcomes, market, n_hat, rng_seed) {
        Ok(sol) => Ok(sol.setting.to_matrix()),
        Err(InferenceError::NoAcceptedLogs) => Err(RunFailure::new(
            FailureKind::NoAcceptedLogs,
            "no accepted log yields a distribution",
        )),
        Err(e) => Err(RunFailure::new(FailureKind::Crash, format!("{e}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitnessMode {
    /// Principal utility of the derived contract against the true agent.
    TrueInteraction,
    /// Share of held-out logs the inferred setting explains, at `tol`.
    HoldoutConsistency { logs: Vec<InteractionLog>, tol: f64 },
}

/// Everything evaluation needs besides the candidate itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationContext {
    pub truth: Scenario,
    pub logs: Vec<InteractionLog>,
    pub mode: FitnessMode,
    pub design: DesignOptions,
}

impl EvaluationContext {
    pub fn new(truth: Scenario, logs: Vec<InteractionLog>) -> Self {
        Self {
            truth,
            logs,
            mode: FitnessMode::TrueInteraction,
            design: DesignOptions::default(),
        }
    }

    pub fn request(&self) -> SandboxRequest {
        SandboxRequest::new(&self.truth.outcomes, &self.logs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub solution: ContractSolution,
    /// Inferred setting as `n x (M + 1)` rows.
    pub setting_matrix: Vec<Vec<f64>>,
}

pub fn evaluate_source<R: SolverRunner + ?Sized>(
    source: &str,
    runner: &mut R,
    ctx: &EvaluationContext,
) -> Result<Evaluation, RunFailure> {
    let matrix = runner.run(source, &ctx.request())?;
    let m = ctx.truth.outcomes.m_count();
    let setting = setting_from_matrix(&matrix, m)?;
    let inferred = ctx
        .truth
        .with_setting(setting)
        .map_err(|e| RunFailure::new(FailureKind::InvalidSetting, format!("{e}")))?;
    let solution = optimize_contract(&inferred, &ctx.design);
    let fitness = match &ctx.mode {
        FitnessMode::TrueInteraction => ctx
            .truth
            .principal_utility(&solution.contract)
            .map_err(|e| RunFailure::new(FailureKind::Design, format!("{e}")))?,
        FitnessMode::HoldoutConsistency { logs, tol } => {
            if logs.is_empty() {
                return Err(RunFailure::new(FailureKind::Malformed, "empty holdout"));
            }
            let report = validate_setting(&inferred, logs, *tol)
                .map_err(|e| RunFailure::new(FailureKind::InvalidSetting, format!("{e}")))?;
            1.0 - report.counts.total() as f64 / logs.len() as f64
        }
    };
    Ok(Evaluation {
        fitness,
        solution,
        setting_matrix: inferred.setting.to_matrix(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub solution: ContractSolution,
    /// Principal utility of the solution on the target scenario, 0 on failure.
    pub utility: f64,
    pub failure: Option<RunFailure>,
}

/// Applies an already evolved solver to a different scenario's logs.
pub fn zero_shot_transfer<R: SolverRunner + ?Sized>(
    source: &str,
    runner: &mut R,
    target: &Scenario,
    target_logs: &[InteractionLog],
) -> TransferResult {
    let ctx = EvaluationContext::new(target.clone(), target_logs.to_vec());
    match evaluate_source(source, runner, &ctx) {
        Ok(ev) => TransferResult {
            utility: ev.fitness,
            solution: ev.solution,
            failure: None,
        },
        Err(f) => TransferResult {
            solution: ContractSolution::null(target.outcomes.m_count()),
            utility: 0.0,
            failure: Some(f),
        },
    }
}
