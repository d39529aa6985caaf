//! Principal-agent contract inference and design.
//!
//! The crate is `no_std` (with `alloc`) and holds every pure algorithm of the
//! toolkit: the expected-utility game model, a dense LP solver, setting
//! inference from interaction logs, optimal contract design, the UCB1 bandit
//! baseline, the reflective evolution loop over solver candidates, and the
//! evaluation metrics. IO, LLM transports, sandbox processes and the CLI live
//! in the `contractlab` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bandit;
pub mod design;
pub mod error;
pub mod evolution;
pub mod inference;
pub mod kmeans;
pub mod linprog;
pub mod metrics;
pub mod model;

mod num;

pub use error::{DesignError, InferenceError, LpError, ModelError};
pub use model::{
    AgentSetting, BestResponse, Contract, InteractionLog, MarketParams, OutcomeSpace, Scenario,
    SimScenarioConfig,
};
