//! Evaluation metrics for a derived contract against the true scenario.
//!
//! Ratios whose denominator vanishes are reported as `None` (rendered as an
//! undefined marker downstream) rather than as infinities.

use serde::{Deserialize, Serialize};

use crate::design::{optimize_contract, DesignOptions};
use crate::error::ModelError;
use crate::model::{Contract, Scenario};

/// Denominators at or below this magnitude make a ratio undefined.
pub const ZERO_GUARD: f64 = 1e-15;

/// `(value - base) / base`, undefined when `base` is zero.
pub fn relative_gain(value: f64, base: f64) -> Option<f64> {
    guarded_ratio(value - base, base)
}

pub fn guarded_ratio(num: f64, den: f64) -> Option<f64> {
    if den.abs() <= ZERO_GUARD || !num.is_finite() || !den.is_finite() {
        None
    } else {
        Some(num / den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Principal utility of the derived contract.
    pub pi_t: f64,
    /// Principal utility when the agent provides the bundled default service.
    pub pi_t_base: f64,
    pub pi_t_pct: Option<f64>,
    /// Agent utility (contract surplus plus subscription surplus) under the
    /// derived contract; just the subscription surplus on rejection.
    pub pi_a: f64,
    pub pi_a_base: f64,
    pub pi_a_pct: Option<f64>,
    /// Principal utility of the full-information optimal contract.
    pub pi_t_oracle: f64,
    pub eta: Option<f64>,
}

/// Baseline principal utility: the default action's expected value minus
/// the subscription fee.
pub fn principal_baseline(scenario: &Scenario) -> f64 {
    let p = scenario.setting.row(0);
    p.iter()
        .zip(scenario.outcomes.valuations())
        .map(|(p, q)| p * q)
        .sum::<f64>()
        - scenario.market.subscription_fee
}

/// Agent utility at its best response to `contract`.
pub fn agent_utility_at_best_response(scenario: &Scenario, contract: &Contract) -> Result<f64, ModelError> {
    let br = scenario.best_response(contract)?;
    let base = scenario.market.subscription_surplus();
    Ok(if br.accepted {
        br.contract_surplus + base
    } else {
        base
    })
}

/// Metrics against an already computed oracle contract.
pub fn compute_metrics_with_oracle(
    derived: &Contract,
    oracle: &Contract,
    scenario: &Scenario,
) -> Result<MetricsReport, ModelError> {
    let pi_t = scenario.principal_utility(derived)?;
    let pi_t_base = principal_baseline(scenario);
    let pi_a = agent_utility_at_best_response(scenario, derived)?;
    let pi_a_base = scenario.market.subscription_surplus();
    let pi_t_oracle = scenario.principal_utility(oracle)?;
    Ok(MetricsReport {
        pi_t,
        pi_t_base,
        pi_t_pct: relative_gain(pi_t, pi_t_base),
        pi_a,
        pi_a_base,
        pi_a_pct: relative_gain(pi_a, pi_a_base),
        pi_t_oracle,
        eta: guarded_ratio(pi_t, pi_t_oracle),
    })
}

/// Metrics with the oracle obtained by optimising on the true setting.
pub fn compute_metrics(derived: &Contract, scenario: &Scenario) -> Result<MetricsReport, ModelError> {
    let oracle = optimize_contract(scenario, &DesignOptions::default());
    compute_metrics_with_oracle(derived, &oracle.contract, scenario)
}
