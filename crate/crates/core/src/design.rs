//! Optimal contract for a known (or inferred) agent setting.
//!
//! For every non-default action we solve the min-payment LP that makes the
//! action incentive compatible and individually rational, value it for the
//! principal, and keep the best. Action 0 earns the principal nothing, so the
//! all-zero contract stands for "do not incentivise".

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::DesignError;
use crate::linprog::{solve_lp, LinearProgram, LpStatus};
use crate::model::{Contract, Scenario};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    /// Extra surplus demanded on top of the action's cost. Zero keeps the LP
    /// optimum exact and relies on principal-favouring tie-breaking.
    pub ir_bonus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionStatus {
    Implementable,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub action: usize,
    pub status: ActionStatus,
    pub contract: Option<Contract>,
    /// Principal utility of the min-payment contract, when implementable.
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSolution {
    pub contract: Contract,
    /// 0 for the null contract.
    pub target_action: usize,
    pub predicted_principal_utility: f64,
    pub per_action_table: Vec<ActionEntry>,
}

impl ContractSolution {
    pub fn null(m_count: usize) -> Self {
        Self {
            contract: Contract::zero(m_count),
            target_action: 0,
            predicted_principal_utility: 0.0,
            per_action_table: Vec::new(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.target_action == 0
    }
}

/// Cheapest contract under which `target` is a best response the agent
/// accepts; `Ok(None)` if no such contract exists.
pub fn min_pay_contract_for_action(
    scenario: &Scenario,
    target: usize,
    options: &DesignOptions,
) -> Result<Option<Contract>, DesignError> {
    let setting = &scenario.setting;
    let n = setting.n_count();
    if target == 0 || target >= n {
        return Err(DesignError::InvalidTarget { target, count: n });
    }
    let m = setting.m_count();
    let p = setting.row(target);
    let c = setting.costs();
    let mut lp = LinearProgram::minimize(p.to_vec());
    for other in (0..n).filter(|&a| a != target) {
        let row: Vec<f64> = setting.row(other).iter().zip(p).map(|(o, t)| o - t).collect();
        lp = lp.le(row, c[other] - c[target]);
    }
    lp = lp.ge(p.to_vec(), c[target] + options.ir_bonus);
    debug_assert_eq!(lp.n_vars(), m);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some(Contract::from_solver(sol.x.expect("optimal"))?)),
        LpStatus::Infeasible | LpStatus::Unbounded => Ok(None),
    }
}

/// Best contract over all non-default target actions, or the null contract
/// when none yields positive principal utility.
pub fn optimize_contract(scenario: &Scenario, options: &DesignOptions) -> ContractSolution {
    let m = scenario.outcomes.m_count();
    let mut table = Vec::with_capacity(scenario.setting.n_count().saturating_sub(1));
    let mut best: Option<(usize, f64)> = None;
    for action in 1..scenario.setting.n_count() {
        let entry = match min_pay_contract_for_action(scenario, action, options) {
            Ok(Some(contract)) => {
                let utility = scenario.action_value(action, &contract);
                if utility > 0.0 && best.is_none_or(|(_, u)| utility > u) {
                    best = Some((table.len(), utility));
                }
                ActionEntry {
                    action,
                    status: ActionStatus::Implementable,
                    contract: Some(contract),
                    utility: Some(utility),
                }
            }
            Ok(None) => ActionEntry {
                action,
                status: ActionStatus::Infeasible,
                contract: None,
                utility: None,
            },
            Err(_) => ActionEntry {
                action,
                status: ActionStatus::NumericalFailure,
                contract: None,
                utility: None,
            },
        };
        table.push(entry);
    }
    match best {
        Some((idx, utility)) => ContractSolution {
            contract: table[idx].contract.clone().expect("implementable entry"),
            target_action: table[idx].action,
            predicted_principal_utility: utility,
            per_action_table: table,
        },
        None => ContractSolution {
            per_action_table: table,
            ..ContractSolution::null(m)
        },
    }
}

pub const DEFAULT_CELL_BUDGET: usize = 20_000_000;

/// Exhaustive search over the payment grid `{0, step, 2 step, ...} <= cap`
/// in every coordinate, scored with the exact best response.
pub fn brute_force_contract(
    scenario: &Scenario,
    grid_step: f64,
    payment_cap: f64,
    cell_budget: usize,
) -> Result<ContractSolution, DesignError> {
    if !(grid_step.is_finite() && grid_step > 0.0 && payment_cap.is_finite() && payment_cap >= 0.0) {
        return Err(DesignError::InvalidGrid);
    }
    let m = scenario.outcomes.m_count();
    let axis = libm::floor(payment_cap / grid_step + 1e-9) as usize + 1;
    let cells = libm::pow(axis as f64, m as f64);
    if cells > cell_budget as f64 {
        return Err(DesignError::GridTooLarge {
            cells,
            budget: cell_budget,
        });
    }
    let mut index = vec![0usize; m];
    let mut best = (Contract::zero(m), scenario.principal_utility(&Contract::zero(m))?);
    loop {
        // odometer increment; the all-zero cell was scored up front
        let mut k = 0;
        while k < m {
            index[k] += 1;
            if index[k] < axis {
                break;
            }
            index[k] = 0;
            k += 1;
        }
        if k == m {
            break;
        }
        let contract = Contract::new(index.iter().map(|&i| i as f64 * grid_step).collect())?;
        let utility = scenario.principal_utility(&contract)?;
        if utility > best.1 {
            best = (contract, utility);
        }
    }
    let br = scenario.best_response(&best.0)?;
    let target_action = if best.1 > 0.0 { br.action_index } else { 0 };
    Ok(ContractSolution {
        contract: best.0,
        target_action,
        predicted_principal_utility: best.1,
        per_action_table: Vec::new(),
    })
}
