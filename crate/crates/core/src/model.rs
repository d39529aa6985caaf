//! Domain types and expected-utility semantics of the contracting game.
//!
//! A principal posts a nonnegative payment vector over `M` outcomes. The agent
//! holds a private setting: an `N x M` row-stochastic matrix mapping actions to
//! outcome distributions plus a per-action cost. The agent picks the action
//! with the largest contract surplus `p_n . r - c_n` and accepts iff that
//! surplus is nonnegative. Action index 0 is the bundled default action; the
//! principal earns nothing when the agent rejects or falls back to it.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::num::{dot, max_abs, sum};

/// Surplus at or above `-ACCEPT_TOL` counts as acceptance.
pub const ACCEPT_TOL: f64 = 1e-12;

/// Relative tolerance under which two contract surpluses are treated as tied.
/// Scaled by the magnitude of payments and costs in play.
pub const TIE_REL_TOL: f64 = 1e-9;

/// Row-sum tolerance for settings built from exact data.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn median(&self) -> f64 {
        (self.low + self.high) / 2.0
    }
}

/// Outcome buckets and the principal's valuation of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    intervals: Vec<Interval>,
    medians: Vec<f64>,
    valuations: Vec<f64>,
    alpha: Option<f64>,
}

impl OutcomeSpace {
    /// Splits `[low, high)` into `m_count` equal buckets and values each
    /// bucket at `ln(1 + alpha * median)`.
    pub fn from_range(low: f64, high: f64, m_count: usize, alpha: f64) -> Result<Self, ModelError> {
        if !(low.is_finite() && high.is_finite()) || low >= high {
            return Err(ModelError::InvalidRange { low, high });
        }
        if m_count == 0 {
            return Err(ModelError::NonPositive { what: "outcome count" });
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(ModelError::NonPositive { what: "alpha" });
        }
        let width = (high - low) / m_count as f64;
        let intervals: Vec<Interval> = (0..m_count)
            .map(|m| Interval {
                low: low + width * m as f64,
                high: if m + 1 == m_count {
                    high
                } else {
                    low + width * (m + 1) as f64
                },
            })
            .collect();
        let medians: Vec<f64> = intervals.iter().map(Interval::median).collect();
        let valuations = medians
            .iter()
            .map(|d| libm::log(1.0 + alpha * d))
            .collect::<Vec<_>>();
        for (index, &value) in valuations.iter().enumerate() {
            if !(value >= 0.0) {
                return Err(ModelError::NegativeValuation { index, value });
            }
        }
        Ok(Self {
            intervals,
            medians,
            valuations,
            alpha: Some(alpha),
        })
    }

    /// Outcome space given directly by its valuation vector.
    pub fn from_valuations(valuations: Vec<f64>) -> Result<Self, ModelError> {
        if valuations.is_empty() {
            return Err(ModelError::NonPositive { what: "outcome count" });
        }
        for (index, &value) in valuations.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { what: "valuations" });
            }
            if value < 0.0 {
                return Err(ModelError::NegativeValuation { index, value });
            }
        }
        Ok(Self {
            intervals: Vec::new(),
            medians: Vec::new(),
            valuations,
            alpha: None,
        })
    }

    pub fn m_count(&self) -> usize {
        self.valuations.len()
    }

    /// Empty when the space was built from raw valuations.
    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn medians(&self) -> &[f64] {
        &self.medians
    }

    pub fn valuations(&self) -> &[f64] {
        &self.valuations
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn max_valuation(&self) -> f64 {
        self.valuations.iter().fold(0.0_f64, |m, v| m.max(*v))
    }
}

/// Free-standing form of [`OutcomeSpace::from_range`].
pub fn build_outcome_space(
    low: f64,
    high: f64,
    m_count: usize,
    alpha: f64,
) -> Result<OutcomeSpace, ModelError> {
    OutcomeSpace::from_range(low, high, m_count, alpha)
}

/// Hidden (or inferred) agent setting: outcome distributions and costs per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSetting {
    probs: Vec<Vec<f64>>,
    costs: Vec<f64>,
}

impl AgentSetting {
    pub fn new(probs: Vec<Vec<f64>>, costs: Vec<f64>) -> Result<Self, ModelError> {
        Self::with_tolerance(probs, costs, STOCHASTIC_TOL)
    }

    /// Validates rows against `tol` for the row sum and entry range.
    pub fn with_tolerance(probs: Vec<Vec<f64>>, costs: Vec<f64>, tol: f64) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::NonPositive { what: "action count" });
        }
        if costs.len() != probs.len() {
            return Err(ModelError::DimensionMismatch {
                what: "cost vector",
                expected: probs.len(),
                found: costs.len(),
            });
        }
        let m = probs[0].len();
        if m == 0 {
            return Err(ModelError::NonPositive { what: "outcome count" });
        }
        for (row, p) in probs.iter().enumerate() {
            if p.len() != m {
                return Err(ModelError::DimensionMismatch {
                    what: "probability row",
                    expected: m,
                    found: p.len(),
                });
            }
            for (col, &value) in p.iter().enumerate() {
                if !value.is_finite() {
                    return Err(ModelError::NonFinite { what: "probability matrix" });
                }
                if value < -tol || value > 1.0 + tol {
                    return Err(ModelError::ProbabilityOutOfRange { row, col, value });
                }
            }
            let s = sum(p);
            if libm::fabs(s - 1.0) > tol {
                return Err(ModelError::NotStochastic { row, sum: s });
            }
        }
        for (index, &value) in costs.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { what: "costs" });
            }
            if value < 0.0 {
                return Err(ModelError::NegativeCost { index, value });
            }
        }
        Ok(Self { probs, costs })
    }

    pub fn n_count(&self) -> usize {
        self.probs.len()
    }

    pub fn m_count(&self) -> usize {
        self.probs[0].len()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.probs[action]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// `n x (m + 1)` matrix: probabilities followed by the cost column.
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.probs
            .iter()
            .zip(&self.costs)
            .map(|(p, c)| {
                let mut row = p.clone();
                row.push(*c);
                row
            })
            .collect()
    }

    pub fn with_costs(&self, costs: Vec<f64>) -> Result<Self, ModelError> {
        Self::with_tolerance(self.probs.clone(), costs, 1e-7)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Per-image subscription fee `r_s`.
    pub subscription_fee: f64,
    /// Per-image training cost `c_t`.
    pub training_cost: f64,
}

impl MarketParams {
    pub fn new(subscription_fee: f64, training_cost: f64) -> Result<Self, ModelError> {
        if !(subscription_fee.is_finite() && training_cost.is_finite()) {
            return Err(ModelError::NonFinite { what: "market params" });
        }
        if subscription_fee < 0.0 || training_cost < 0.0 {
            return Err(ModelError::Invalid("market params must be nonnegative".into()));
        }
        Ok(Self {
            subscription_fee,
            training_cost,
        })
    }

    /// `r_s - c_t`; negative values are legal but unusual.
    pub fn subscription_surplus(&self) -> f64 {
        self.subscription_fee - self.training_cost
    }
}

/// Nonnegative payment vector over outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Contract(Vec<f64>);

impl Contract {
    pub fn new(payments: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in payments.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { what: "contract" });
            }
            if value < 0.0 {
                return Err(ModelError::NegativePayment { index, value });
            }
        }
        Ok(Self(payments))
    }

    /// Clamps tiny negative round-off to zero before validating.
    pub fn from_solver(mut payments: Vec<f64>) -> Result<Self, ModelError> {
        for v in payments.iter_mut() {
            if *v < 0.0 && *v > -1e-9 {
                *v = 0.0;
            }
        }
        Self::new(payments)
    }

    pub fn zero(m_count: usize) -> Self {
        Self(vec![0.0; m_count])
    }

    pub fn payments(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Acceptance {
    Accepted,
    Rejected,
}

impl Acceptance {
    /// `+1` for acceptance, `-1` for rejection.
    pub fn indicator(self) -> i8 {
        match self {
            Acceptance::Accepted => 1,
            Acceptance::Rejected => -1,
        }
    }

    pub fn from_indicator(value: i64) -> Option<Self> {
        match value {
            1 => Some(Acceptance::Accepted),
            -1 => Some(Acceptance::Rejected),
            _ => None,
        }
    }

    pub fn is_accepted(self) -> bool {
        self == Acceptance::Accepted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionLog {
    pub contract: Contract,
    pub principal_utility: f64,
    pub acceptance: Acceptance,
}

impl InteractionLog {
    pub fn new(contract: Contract, principal_utility: f64, acceptance: Acceptance) -> Result<Self, ModelError> {
        if !principal_utility.is_finite() {
            return Err(ModelError::NonFinite { what: "principal utility" });
        }
        if acceptance == Acceptance::Rejected && principal_utility != 0.0 {
            return Err(ModelError::Invalid(
                "rejected log must carry zero principal utility".into(),
            ));
        }
        Ok(Self {
            contract,
            principal_utility,
            acceptance,
        })
    }

    pub fn is_accepted(&self) -> bool {
        self.acceptance.is_accepted()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub action_index: usize,
    /// `Delta_b` of the chosen action.
    pub contract_surplus: f64,
    pub accepted: bool,
}

/// Everything needed to play the game: agent setting, valuations and market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub setting: AgentSetting,
    pub outcomes: OutcomeSpace,
    pub market: MarketParams,
}

impl Scenario {
    pub fn new(setting: AgentSetting, outcomes: OutcomeSpace, market: MarketParams) -> Result<Self, ModelError> {
        if setting.m_count() != outcomes.m_count() {
            return Err(ModelError::DimensionMismatch {
                what: "setting outcome count",
                expected: outcomes.m_count(),
                found: setting.m_count(),
            });
        }
        Ok(Self {
            setting,
            outcomes,
            market,
        })
    }

    /// Same outcomes and market, different agent setting.
    pub fn with_setting(&self, setting: AgentSetting) -> Result<Self, ModelError> {
        Self::new(setting, self.outcomes.clone(), self.market)
    }

    fn check_contract(&self, contract: &Contract) -> Result<(), ModelError> {
        if contract.len() != self.outcomes.m_count() {
            return Err(ModelError::DimensionMismatch {
                what: "contract",
                expected: self.outcomes.m_count(),
                found: contract.len(),
            });
        }
        Ok(())
    }

    /// Expected payment minus cost for one action.
    pub fn contract_surplus(&self, action: usize, contract: &Contract) -> f64 {
        dot(self.setting.row(action), contract.payments()) - self.setting.costs()[action]
    }

    /// Principal's payoff if the agent takes `action` under `contract`, with the
    /// default action worth nothing.
    pub fn action_value(&self, action: usize, contract: &Contract) -> f64 {
        if action == 0 {
            return 0.0;
        }
        let p = self.setting.row(action);
        let q = self.outcomes.valuations();
        let r = contract.payments();
        p.iter()
            .zip(q.iter().zip(r))
            .map(|(p, (q, r))| p * (q - r))
            .sum::<f64>()
            - self.market.subscription_fee
    }

    /// Absolute tie tolerance for surplus comparisons under `contract`.
    pub fn tie_tolerance(&self, contract: &Contract) -> f64 {
        let scale = max_abs(contract.payments()).max(max_abs(self.setting.costs()));
        TIE_REL_TOL * scale.max(1e-300)
    }

    pub fn best_response(&self, contract: &Contract) -> Result<BestResponse, ModelError> {
        self.check_contract(contract)?;
        let n = self.setting.n_count();
        let surplus: Vec<f64> = (0..n).map(|a| self.contract_surplus(a, contract)).collect();
        let top = surplus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if top < -ACCEPT_TOL {
            return Ok(BestResponse {
                action_index: 0,
                contract_surplus: surplus[0],
                accepted: false,
            });
        }
        let tie = self.tie_tolerance(contract);
        let mut best: Option<(usize, f64)> = None;
        for (a, &s) in surplus.iter().enumerate() {
            if s < top - tie || s < -ACCEPT_TOL {
                continue;
            }
            let value = self.action_value(a, contract);
            match best {
                Some((_, v)) if value <= v => {}
                _ => best = Some((a, value)),
            }
        }
        let (action_index, _) = best.expect("the maximiser is always a candidate");
        Ok(BestResponse {
            action_index,
            contract_surplus: surplus[action_index],
            accepted: true,
        })
    }

    pub fn principal_utility(&self, contract: &Contract) -> Result<f64, ModelError> {
        let br = self.best_response(contract)?;
        if !br.accepted || br.action_index == 0 {
            return Ok(0.0);
        }
        Ok(self.action_value(br.action_index, contract))
    }

    /// Deterministic (expected-utility) interaction round.
    pub fn simulate_interaction(&self, contract: &Contract) -> Result<InteractionLog, ModelError> {
        let br = self.best_response(contract)?;
        let (utility, acceptance) = if !br.accepted {
            (0.0, Acceptance::Rejected)
        } else if br.action_index == 0 {
            (0.0, Acceptance::Accepted)
        } else {
            (self.action_value(br.action_index, contract), Acceptance::Accepted)
        };
        Ok(InteractionLog {
            contract: contract.clone(),
            principal_utility: utility,
            acceptance,
        })
    }

    /// Interaction round where one outcome is drawn from the chosen action's
    /// distribution instead of taking the expectation.
    pub fn simulate_interaction_sampled<R: Rng + ?Sized>(
        &self,
        contract: &Contract,
        rng: &mut R,
    ) -> Result<InteractionLog, ModelError> {
        let br = self.best_response(contract)?;
        if !br.accepted {
            return InteractionLog::new(contract.clone(), 0.0, Acceptance::Rejected);
        }
        if br.action_index == 0 {
            return InteractionLog::new(contract.clone(), 0.0, Acceptance::Accepted);
        }
        let p = self.setting.row(br.action_index);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut outcome = p.len() - 1;
        for (m, pm) in p.iter().enumerate() {
            acc += pm;
            if u < acc {
                outcome = m;
                break;
            }
        }
        let utility = self.outcomes.valuations()[outcome]
            - contract.payments()[outcome]
            - self.market.subscription_fee;
        InteractionLog::new(contract.clone(), utility, Acceptance::Accepted)
    }
}

/// `(Delta_b, pi_A)` for one action: contract surplus and total agent utility.
pub fn agent_utility(
    action_index: usize,
    contract: &Contract,
    setting: &AgentSetting,
    market: &MarketParams,
) -> Result<(f64, f64), ModelError> {
    if action_index >= setting.n_count() {
        return Err(ModelError::ActionOutOfRange {
            index: action_index,
            count: setting.n_count(),
        });
    }
    if contract.len() != setting.m_count() {
        return Err(ModelError::DimensionMismatch {
            what: "contract",
            expected: setting.m_count(),
            found: contract.len(),
        });
    }
    let surplus = dot(setting.row(action_index), contract.payments()) - setting.costs()[action_index];
    Ok((surplus, surplus + market.subscription_surplus()))
}

/// Distribution of exploratory contracts: each payment uniform on `[0, high]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ContractSampler {
    /// Upper payment bound; `None` means the largest valuation.
    pub high: Option<f64>,
}

impl ContractSampler {
    pub fn sample<R: Rng + ?Sized>(&self, outcomes: &OutcomeSpace, rng: &mut R) -> Contract {
        let high = self.high.unwrap_or_else(|| outcomes.max_valuation()).max(0.0);
        let payments = (0..outcomes.m_count())
            .map(|_| {
                if high == 0.0 {
                    0.0
                } else {
                    rng.random::<f64>() * high
                }
            })
            .collect();
        Contract(payments)
    }
}

/// `count` logs from i.i.d. random contracts under expected-utility semantics.
pub fn generate_random_logs(
    scenario: &Scenario,
    count: usize,
    sampler: ContractSampler,
    rng_seed: u64,
) -> Result<Vec<InteractionLog>, ModelError> {
    if count == 0 {
        return Err(ModelError::NonPositive { what: "log count" });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count)
        .map(|_| {
            let contract = sampler.sample(&scenario.outcomes, &mut rng);
            scenario.simulate_interaction(&contract)
        })
        .collect()
}

/// Synthetic scenario: softmax-of-Gaussian outcome distributions, uniform
/// valuations, and costs mixing a value-correlated and an independent part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimScenarioConfig {
    pub m_count: usize,
    pub n_count: usize,
    pub beta_c: f64,
    pub beta_p: f64,
    pub valuation_low: f64,
    pub valuation_high: f64,
    /// When set, valuations come from `ln(1 + alpha * median)` over equal
    /// buckets of `[valuation_low, valuation_high)` instead of uniform draws.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub rng_seed: u64,
}

impl SimScenarioConfig {
    pub fn new(m_count: usize, n_count: usize, rng_seed: u64) -> Self {
        Self {
            m_count,
            n_count,
            beta_c: 0.7,
            beta_p: 0.3,
            valuation_low: 0.0,
            valuation_high: 10.0,
            alpha: None,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m_count == 0 {
            return Err(ModelError::NonPositive { what: "outcome count" });
        }
        if self.n_count == 0 {
            return Err(ModelError::NonPositive { what: "action count" });
        }
        for (what, v) in [("beta_c", self.beta_c), ("beta_p", self.beta_p)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ModelError::Invalid(alloc::format!("{what} must lie in [0, 1]")));
            }
        }
        if !(self.valuation_low < self.valuation_high) {
            return Err(ModelError::InvalidRange {
                low: self.valuation_low,
                high: self.valuation_high,
            });
        }
        Ok(())
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| libm::exp(v - top)).collect();
    let s = sum(&e);
    e.into_iter().map(|v| v / s).collect()
}

/// Draw order under the seed: valuations, then per action its Gaussian
/// vector followed by its independent cost.
pub fn generate_sim_setting(config: &SimScenarioConfig) -> Result<Scenario, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let outcomes = match config.alpha {
        Some(alpha) => OutcomeSpace::from_range(
            config.valuation_low,
            config.valuation_high,
            config.m_count,
            alpha,
        )?,
        None => {
            let dist = Uniform::new(config.valuation_low, config.valuation_high)
                .map_err(|_| ModelError::InvalidRange {
                    low: config.valuation_low,
                    high: config.valuation_high,
                })?;
            OutcomeSpace::from_valuations((0..config.m_count).map(|_| dist.sample(&mut rng)).collect())?
        }
    };
    let q = outcomes.valuations();
    let mut probs = Vec::with_capacity(config.n_count);
    let mut costs = Vec::with_capacity(config.n_count);
    for _ in 0..config.n_count {
        let z: Vec<f64> = (0..config.m_count)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let p = softmax(&z);
        let correlated = config.beta_c * dot(&p, q);
        let independent: f64 = rng.random();
        costs.push((1.0 - config.beta_p) * correlated + config.beta_p * independent);
        probs.push(p);
    }
    let setting = AgentSetting::new(probs, costs)?;
    Scenario::new(setting, outcomes, MarketParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_by_two(costs: Vec<f64>) -> Scenario {
        Scenario::new(
            AgentSetting::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], costs).unwrap(),
            OutcomeSpace::from_valuations(vec![0.0, 1.0]).unwrap(),
            MarketParams::default(),
        )
        .unwrap()
    }

    fn c(v: &[f64]) -> Contract {
        Contract::new(v.to_vec()).unwrap()
    }

    #[test]
    fn outcome_space_two_buckets() {
        let o = build_outcome_space(0.9, 1.8, 2, 5e-4).unwrap();
        assert_eq!(o.intervals().len(), 2);
        assert!((o.intervals()[0].low - 0.9).abs() < 1e-15);
        assert!((o.intervals()[0].high - 1.35).abs() < 1e-12);
        assert!((o.intervals()[1].low - 1.35).abs() < 1e-12);
        assert!((o.intervals()[1].high - 1.8).abs() < 1e-15);
        assert!((o.medians()[0] - 1.125).abs() < 1e-12);
        assert!((o.medians()[1] - 1.575).abs() < 1e-12);
        // ln(1.0005625), evaluated independently
        assert!((o.valuations()[0] - 5.623_418_561_761_762e-4).abs() < 1e-12);
        assert_eq!(o.intervals()[0].high, o.intervals()[1].low);
    }

    #[test]
    fn outcome_space_single_bucket() {
        let o = build_outcome_space(0.0, 1.0, 1, 3.0).unwrap();
        assert_eq!(o.intervals(), &[Interval { low: 0.0, high: 1.0 }]);
        assert_eq!(o.medians(), &[0.5]);
    }

    #[test]
    fn outcome_space_errors() {
        assert!(matches!(
            build_outcome_space(1.0, 1.0, 2, 1.0),
            Err(ModelError::InvalidRange { .. })
        ));
        assert!(matches!(
            build_outcome_space(0.0, 1.0, 0, 1.0),
            Err(ModelError::NonPositive { .. })
        ));
    }

    #[test]
    fn agent_utility_examples() {
        let s = two_by_two(vec![0.0, 0.5]);
        let (b, a) = agent_utility(1, &c(&[0.0, 0.6]), &s.setting, &s.market).unwrap();
        assert!((b - 0.1).abs() < 1e-12 && (a - 0.1).abs() < 1e-12);

        let market = MarketParams::new(1.6e-4, 1.2e-4).unwrap();
        assert!((market.subscription_surplus() - 4e-5).abs() < 1e-18);
        let (b, a) = agent_utility(0, &Contract::zero(2), &s.setting, &market).unwrap();
        assert_eq!(b, 0.0);
        assert!((a - 4e-5).abs() < 1e-18);

        assert!(matches!(
            agent_utility(2, &Contract::zero(2), &s.setting, &market),
            Err(ModelError::ActionOutOfRange { .. })
        ));
        assert!(matches!(
            agent_utility(0, &Contract::zero(3), &s.setting, &market),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn best_response_examples() {
        let s = two_by_two(vec![0.0, 0.5]);
        let br = s.best_response(&c(&[0.0, 0.6])).unwrap();
        assert_eq!(br.action_index, 1);
        assert!((br.contract_surplus - 0.1).abs() < 1e-12);
        assert!(br.accepted);

        let br = s.best_response(&Contract::zero(2)).unwrap();
        assert_eq!((br.action_index, br.accepted), (0, true));
        assert_eq!(br.contract_surplus, 0.0);

        // exact tie, resolved toward the principal's preferred action
        let br = s.best_response(&c(&[0.0, 0.5])).unwrap();
        assert_eq!((br.action_index, br.accepted), (1, true));
    }

    #[test]
    fn principal_utility_examples() {
        let s = two_by_two(vec![0.0, 0.5]);
        assert!((s.principal_utility(&c(&[0.0, 0.6])).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(s.principal_utility(&Contract::zero(2)).unwrap(), 0.0);

        let rejecting = two_by_two(vec![0.1, 2.0]);
        let br = rejecting.best_response(&Contract::zero(2)).unwrap();
        assert!(!br.accepted);
        assert_eq!(br.action_index, 0);
        assert_eq!(rejecting.principal_utility(&Contract::zero(2)).unwrap(), 0.0);
    }

    #[test]
    fn simulate_interaction_examples() {
        let s = two_by_two(vec![0.0, 0.5]);
        let log = s.simulate_interaction(&c(&[0.0, 0.6])).unwrap();
        assert!((log.principal_utility - 0.4).abs() < 1e-12);
        assert_eq!(log.acceptance.indicator(), 1);

        let log = two_by_two(vec![0.1, 2.0])
            .simulate_interaction(&Contract::zero(2))
            .unwrap();
        assert_eq!((log.principal_utility, log.acceptance.indicator()), (0.0, -1));

        let log = s.simulate_interaction(&Contract::zero(2)).unwrap();
        assert_eq!((log.principal_utility, log.acceptance.indicator()), (0.0, 1));
    }

    #[test]
    fn sampled_mode_draws_realized_outcomes() {
        let s = two_by_two(vec![0.0, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let log = s.simulate_interaction_sampled(&c(&[0.0, 0.6]), &mut rng).unwrap();
        // action 1 puts all mass on outcome 1
        assert!((log.principal_utility - 0.4).abs() < 1e-12);
    }

    #[test]
    fn random_logs() {
        let s = two_by_two(vec![0.0, 0.5]);
        let logs = generate_random_logs(&s, 25, ContractSampler::default(), 9).unwrap();
        assert_eq!(logs.len(), 25);
        assert_eq!(
            logs,
            generate_random_logs(&s, 25, ContractSampler::default(), 9).unwrap()
        );
        let zero = generate_random_logs(&s, 1, ContractSampler { high: Some(0.0) }, 9).unwrap();
        assert_eq!(zero.len(), 1);
        assert!(zero[0].contract.is_zero());
        assert_eq!(zero[0].principal_utility, 0.0);
        assert!(zero[0].is_accepted());
        assert!(generate_random_logs(&s, 0, ContractSampler::default(), 9).is_err());
    }

    #[test]
    fn sim_setting_defaults_and_shape() {
        let cfg = SimScenarioConfig::new(4, 5, 3);
        assert_eq!((cfg.beta_c, cfg.beta_p), (0.7, 0.3));
        let s = generate_sim_setting(&cfg).unwrap();
        assert_eq!(s.setting.n_count(), 5);
        for row in s.setting.probs() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for q in s.outcomes.valuations() {
            assert!((0.0..10.0).contains(q));
        }
        assert_eq!(s.market, MarketParams::default());
        assert_eq!(s, generate_sim_setting(&cfg).unwrap());

        let single = generate_sim_setting(&SimScenarioConfig::new(1, 3, 3)).unwrap();
        for row in single.setting.probs() {
            assert_eq!(row, &vec![1.0]);
        }
    }

    #[test]
    fn setting_validation_names_row() {
        let err = AgentSetting::new(vec![vec![0.5, 0.5], vec![0.5, 0.4]], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, ModelError::NotStochastic { row: 1, .. }));
        let err = AgentSetting::new(vec![vec![1.0]], vec![-0.1]).unwrap_err();
        assert!(matches!(err, ModelError::NegativeCost { index: 0, .. }));
        let err = AgentSetting::new(vec![vec![1.0]], vec![0.0, 0.0]).unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }
}
