//! Recovering a hidden agent setting from interaction logs.
//!
//! Each accepted log pins down one outcome distribution through a small LP
//! (the cheapest distribution that reproduces the logged principal utility).
//! The recovered vectors are clustered into candidate actions, and costs are
//! then bounded from above by accepted contracts and from below by rejected
//! ones. [`validate_setting`] checks any setting against the logical
//! feasibility constraints a consistent setting must satisfy.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{InferenceError, ModelError};
use crate::kmeans::{kmeans, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
use crate::linprog::{solve_lp, LinearProgram, LpStatus};
use crate::model::{AgentSetting, InteractionLog, MarketParams, OutcomeSpace, Scenario};
use crate::num::dot;

/// Strict margin added to rejection-derived cost bounds.
pub const REJECTION_MARGIN: f64 = 1e-8;

/// Default number of inferred actions.
pub const DEFAULT_N_HAT: usize = 7;

/// Row-sum tolerance for inferred distributions.
pub const INFERRED_TOL: f64 = 1e-7;

/// Recovered outcome distributions, one per accepted log with a feasible LP.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateDistributions {
    pub vectors: Vec<Vec<f64>>,
}

/// Cheapest outcome distribution consistent with one accepted log.
///
/// Solves `min p . r` subject to `sum p = 1`, `p . (q - r) - r_s = pi_T` and
/// `0 <= p <= 1`. Returns `Ok(None)` when no distribution reproduces the
/// logged utility.
pub fn recover_distribution(
    log: &InteractionLog,
    outcomes: &OutcomeSpace,
    market: &MarketParams,
) -> Result<Option<Vec<f64>>, InferenceError> {
    if !log.is_accepted() {
        return Err(InferenceError::RejectedLog);
    }
    let m = outcomes.m_count();
    let r = log.contract.payments();
    if r.len() != m {
        return Err(ModelError::DimensionMismatch {
            what: "contract",
            expected: m,
            found: r.len(),
        }
        .into());
    }
    let margin: Vec<f64> = outcomes
        .valuations()
        .iter()
        .zip(r)
        .map(|(q, r)| q - r)
        .collect();
    let lp = LinearProgram::minimize(r.to_vec())
        .with_bounds(vec![(0.0, 1.0); m])
        .eq(vec![1.0; m], 1.0)
        .eq(margin, log.principal_utility + market.subscription_fee);
    let sol = solve_lp(&lp)?;
    Ok(match sol.status {
        LpStatus::Optimal => sol.x,
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    /// Renormalised centers, ascending by expected valuation.
    pub centers: Vec<Vec<f64>>,
    pub requested_k: usize,
    /// Smaller than `requested_k` when there were fewer points than clusters.
    pub used_k: usize,
}

impl Clustering {
    pub fn was_reduced(&self) -> bool {
        self.used_k < self.requested_k
    }
}

/// k-means over recovered distributions, centers renormalised and sorted by
/// `center . q`.
pub fn cluster_distributions(
    points: &CandidateDistributions,
    k: usize,
    valuations: &[f64],
    rng_seed: u64,
) -> Result<Clustering, InferenceError> {
    if k == 0 || points.vectors.is_empty() {
        return Err(InferenceError::EmptyClustering);
    }
    let used_k = k.min(points.vectors.len());
    let fit = kmeans(&points.vectors, used_k, DEFAULT_RESTARTS, DEFAULT_MAX_ITER, rng_seed);
    let mut centers: Vec<Vec<f64>> = fit
        .centers
        .into_iter()
        .map(|c| {
            let clipped: Vec<f64> = c.into_iter().map(|v| v.max(0.0)).collect();
            let s: f64 = clipped.iter().sum();
            clipped.into_iter().map(|v| v / s).collect()
        })
        .collect();
    centers.sort_by(|a, b| dot(a, valuations).total_cmp(&dot(b, valuations)));
    Ok(Clustering {
        centers,
        requested_k: k,
        used_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSolution {
    pub setting: AgentSetting,
    pub candidates: CandidateDistributions,
    /// Accepted logs whose distribution LP had no solution.
    pub skipped_logs: usize,
    pub clustering_reduced: bool,
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// The LP-plus-clustering seed solver.
///
/// 1. recover a distribution from every accepted log;
/// 2. cluster them into `n_hat` actions;
/// 3. give each accepted log to the action with the largest expected
///    payment and set that action's cost to the smallest such payment;
/// 4. raise every cost above the expected payment of each rejected contract
///    by [`REJECTION_MARGIN`].
pub fn seed_solve(
    logs: &[InteractionLog],
    outcomes: &OutcomeSpace,
    market: &MarketParams,
    n_hat: usize,
    rng_seed: u64,
) -> Result<SeedSolution, InferenceError> {
    let mut candidates = CandidateDistributions::default();
    let mut skipped_logs = 0;
    for log in logs.iter().filter(|l| l.is_accepted()) {
        match recover_distribution(log, outcomes, market) {
            Ok(Some(p)) => candidates.vectors.push(p),
            Ok(None) | Err(InferenceError::Lp(_)) => skipped_logs += 1,
            Err(e) => return Err(e),
        }
    }
    if candidates.vectors.is_empty() {
        return Err(InferenceError::NoAcceptedLogs);
    }
    let clustering = cluster_distributions(&candidates, n_hat, outcomes.valuations(), rng_seed)?;
    let probs = clustering.centers;
    let k = probs.len();

    let mut costs = vec![0.0; k];
    let mut assigned = vec![false; k];
    for log in logs.iter().filter(|l| l.is_accepted()) {
        let r = log.contract.payments();
        let action = argmax_first(probs.iter().map(|p| dot(p, r)));
        let payment = dot(&probs[action], r);
        if assigned[action] {
            costs[action] = f64::min(costs[action], payment);
        } else {
            costs[action] = payment;
            assigned[action] = true;
        }
    }
    for log in logs.iter().filter(|l| !l.is_accepted()) {
        let r = log.contract.payments();
        for (c, p) in costs.iter_mut().zip(&probs) {
            *c = f64::max(*c, dot(p, r) + REJECTION_MARGIN);
        }
    }
    let setting = AgentSetting::with_tolerance(probs, costs, INFERRED_TOL)?;
    Ok(SeedSolution {
        setting,
        candidates,
        skipped_logs,
        clustering_reduced: clustering.requested_k != clustering.used_k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    UtilityMismatch,
    IrViolation,
    IcViolation,
    RejectionViolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogVerdict {
    /// Accepted log explained by this action.
    Witness(usize),
    /// Rejected log that every action indeed rejects.
    Rejected,
    Violation(Violation),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub utility_mismatch: usize,
    pub ir_violation: usize,
    pub ic_violation: usize,
    pub rejection_violation: usize,
}

impl ViolationCounts {
    pub fn total(&self) -> usize {
        self.utility_mismatch + self.ir_violation + self.ic_violation + self.rejection_violation
    }

    fn bump(&mut self, v: Violation) {
        match v {
            Violation::UtilityMismatch => self.utility_mismatch += 1,
            Violation::IrViolation => self.ir_violation += 1,
            Violation::IcViolation => self.ic_violation += 1,
            Violation::RejectionViolation => self.rejection_violation += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub verdicts: Vec<LogVerdict>,
    pub counts: ViolationCounts,
    pub overall_consistent: bool,
}

/// Checks `scenario.setting` against the logs.
///
/// An accepted log needs one action that reproduces the logged utility, is
/// individually rational and is a best response, all within `tol`. The
/// default action (index 0) predicts zero principal utility. A rejected log
/// needs every action's contract surplus to be at most `tol`.
pub fn validate_setting(
    scenario: &Scenario,
    logs: &[InteractionLog],
    tol: f64,
) -> Result<ConsistencyReport, ModelError> {
    let n = scenario.setting.n_count();
    let mut verdicts = Vec::with_capacity(logs.len());
    let mut counts = ViolationCounts::default();
    for log in logs {
        let contract = &log.contract;
        if contract.len() != scenario.outcomes.m_count() {
            return Err(ModelError::DimensionMismatch {
                what: "contract",
                expected: scenario.outcomes.m_count(),
                found: contract.len(),
            });
        }
        let surplus: Vec<f64> = (0..n).map(|a| scenario.contract_surplus(a, contract)).collect();
        let top = surplus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let verdict = if log.is_accepted() {
            let mut matched = false;
            let mut matched_ir = false;
            let mut witness = None;
            for a in 0..n {
                let utility_ok =
                    (scenario.action_value(a, contract) - log.principal_utility).abs() <= tol;
                if !utility_ok {
                    continue;
                }
                matched = true;
                if surplus[a] < -tol {
                    continue;
                }
                matched_ir = true;
                if surplus[a] >= top - tol {
                    witness = Some(a);
                    break;
                }
            }
            match witness {
                Some(a) => LogVerdict::Witness(a),
                None if !matched => LogVerdict::Violation(Violation::UtilityMismatch),
                None if !matched_ir => LogVerdict::Violation(Violation::IrViolation),
                None => LogVerdict::Violation(Violation::IcViolation),
            }
        } else if top <= tol {
            LogVerdict::Rejected
        } else {
            LogVerdict::Violation(Violation::RejectionViolation)
        };
        if let LogVerdict::Violation(v) = verdict {
            counts.bump(v);
        }
        verdicts.push(verdict);
    }
    let overall_consistent = counts.total() == 0;
    Ok(ConsistencyReport {
        verdicts,
        counts,
        overall_consistent,
    })
}
