//! UCB1 over a finite menu of posted contracts.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Contract, OutcomeSpace, Scenario};

pub const DEFAULT_GRID_SIZE: usize = 11;

/// Linear contracts `beta_j * q` with `beta_j = j / (grid_size - 1)`.
pub fn build_linear_arm_grid(outcomes: &OutcomeSpace, grid_size: usize) -> Result<Vec<Contract>, ModelError> {
    if grid_size == 0 {
        return Err(ModelError::NonPositive { what: "grid size" });
    }
    linear_betas(grid_size)
        .into_iter()
        .map(|beta| Contract::new(outcomes.valuations().iter().map(|q| beta * q).collect()))
        .collect()
}

pub fn linear_betas(grid_size: usize) -> Vec<f64> {
    if grid_size <= 1 {
        return vec![0.0];
    }
    (0..grid_size)
        .map(|j| j as f64 / (grid_size - 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub arms: Vec<Contract>,
    pub pull_counts: Vec<u64>,
    pub mean_rewards: Vec<f64>,
    pub round: u64,
}

impl BanditState {
    pub fn new(arms: Vec<Contract>) -> Self {
        let k = arms.len();
        Self {
            arms,
            pull_counts: vec![0; k],
            mean_rewards: vec![0.0; k],
            round: 0,
        }
    }

    /// Untried arms first (lowest index), then the largest
    /// `mean + sqrt(2 ln t / n)`; ties go to the lower index.
    pub fn select(&self) -> usize {
        if let Some(i) = self.pull_counts.iter().position(|&n| n == 0) {
            return i;
        }
        let ln_t = libm::log(self.round as f64);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (&n, &mean)) in self.pull_counts.iter().zip(&self.mean_rewards).enumerate() {
            let score = mean + libm::sqrt(2.0 * ln_t / n as f64);
            if score > best.1 {
                best = (i, score);
            }
        }
        best.0
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.pull_counts[arm] += 1;
        self.round += 1;
        let n = self.pull_counts[arm] as f64;
        self.mean_rewards[arm] += (reward - self.mean_rewards[arm]) / n;
    }

    /// Arm with the highest empirical mean among pulled arms.
    pub fn best_arm(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (&n, &mean)) in self.pull_counts.iter().zip(&self.mean_rewards).enumerate() {
            if n > 0 && mean > best.1 {
                best = (i, mean);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub round: u64,
    pub arm_index: usize,
    /// Slope of the arm when it is a linear contract.
    pub beta: Option<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRun {
    pub best_arm: usize,
    pub best_contract: Contract,
    pub trace: Vec<TraceEntry>,
    pub state: BanditState,
}

/// Runs UCB1 for `rounds` pulls with an arbitrary reward oracle.
pub fn run_ucb1<F>(arms: Vec<Contract>, betas: Option<Vec<f64>>, rounds: usize, mut reward: F) -> Result<BanditRun, ModelError>
where
    F: FnMut(&Contract) -> Result<f64, ModelError>,
{
    if arms.is_empty() {
        return Err(ModelError::NonPositive { what: "arm count" });
    }
    if rounds < arms.len() {
        return Err(ModelError::Invalid(format!(
            "{rounds} rounds cannot pull each of {} arms once",
            arms.len()
        )));
    }
    let mut state = BanditState::new(arms);
    let mut trace = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let arm = state.select();
        let r = reward(&state.arms[arm])?;
        state.update(arm, r);
        trace.push(TraceEntry {
            round: state.round,
            arm_index: arm,
            beta: betas.as_ref().map(|b| b[arm]),
            reward: r,
        });
    }
    let best_arm = state.best_arm();
    Ok(BanditRun {
        best_arm,
        best_contract: state.arms[best_arm].clone(),
        trace,
        state,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardMode {
    /// Reward is the expected principal utility of the pulled contract.
    #[default]
    Expected,
    /// Reward is the realised utility of one sampled outcome.
    Sampled,
}

/// UCB1 over the linear arm grid against the scenario's agent. The seed
/// only matters in [`RewardMode::Sampled`].
pub fn bandit_run(
    scenario: &Scenario,
    rounds: usize,
    grid_size: usize,
    mode: RewardMode,
    rng_seed: u64,
) -> Result<BanditRun, ModelError> {
    let arms = build_linear_arm_grid(&scenario.outcomes, grid_size)?;
    let betas = linear_betas(grid_size);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    run_ucb1(arms, Some(betas), rounds, |contract| match mode {
        RewardMode::Expected => scenario.principal_utility(contract),
        RewardMode::Sampled => scenario
            .simulate_interaction_sampled(contract, &mut rng)
            .map(|log| log.principal_utility),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AgentSetting, MarketParams};
    use alloc::vec;

    fn identity() -> Scenario {
        Scenario::new(
            AgentSetting::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.5]).unwrap(),
            OutcomeSpace::from_valuations(vec![0.0, 1.0]).unwrap(),
            MarketParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn linear_grid() {
        let q = OutcomeSpace::from_valuations(vec![0.0, 1.0]).unwrap();
        let arms = build_linear_arm_grid(&q, 11).unwrap();
        assert_eq!(arms.len(), 11);
        for (j, arm) in arms.iter().enumerate() {
            assert!((arm.payments()[1] - j as f64 / 10.0).abs() < 1e-15);
            assert!(arm.payments().iter().all(|v| *v >= 0.0));
        }
        let single = build_linear_arm_grid(&q, 1).unwrap();
        assert_eq!(single, vec![Contract::zero(2)]);
        assert!(build_linear_arm_grid(&q, 0).is_err());
    }

    #[test]
    fn single_arm_is_returned() {
        let arms = vec![Contract::new(vec![0.0, 0.5]).unwrap()];
        let run = run_ucb1(arms.clone(), None, 5, |c| identity().principal_utility(c)).unwrap();
        assert_eq!(run.best_arm, 0);
        assert_eq!(run.best_contract, arms[0]);
    }

    #[test]
    fn initial_phase_pulls_every_arm_once() {
        let s = identity();
        let run = bandit_run(&s, 11, 11, RewardMode::Expected, 0).unwrap();
        assert!(run.state.pull_counts.iter().all(|&n| n == 1));
        assert!(bandit_run(&s, 10, 11, RewardMode::Expected, 0).is_err());
    }

    #[test]
    fn trace_replays_rewards() {
        let s = identity();
        let run = bandit_run(&s, 200, 11, RewardMode::Expected, 0).unwrap();
        let arms = build_linear_arm_grid(&s.outcomes, 11).unwrap();
        for e in &run.trace {
            assert_eq!(e.reward, s.principal_utility(&arms[e.arm_index]).unwrap());
        }
        assert_eq!(run.state.round, 200);
        assert_eq!(run.state.pull_counts.iter().sum::<u64>(), 200);
    }
}
