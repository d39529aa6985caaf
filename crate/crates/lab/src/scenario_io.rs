//! Scenario and log files.
//!
//! A scenario file is JSON:
//! `{"m", "n", "alpha"?, "outcome_range"?, "q"?, "P", "c", "r_s", "c_t"}` where
//! exactly one of `alpha` + `outcome_range` or `q` fixes the valuations. A
//! `generated_from` field may record the simulation config it came from; it
//! is ignored by the digest. Logs are JSON lines
//! `{"contract": [..], "principal_utility": x, "agent_action": 1 | -1}`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use contractlab_core::model::{Acceptance, OutcomeSpace};
use contractlab_core::{AgentSetting, Contract, InteractionLog, MarketParams, Scenario, SimScenarioConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Hex characters of the SHA-256 kept as the scenario digest.
pub const DIGEST_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    /// Outcome distribution per action; row 0 is the default action.
    #[serde(rename = "P")]
    pub probs: Vec<Vec<f64>>,
    #[serde(rename = "c")]
    pub costs: Vec<f64>,
    #[serde(default)]
    pub r_s: f64,
    #[serde(default)]
    pub c_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_from: Option<SimScenarioConfig>,
}

impl ScenarioFile {
    pub fn from_scenario(scenario: &Scenario, generated_from: Option<SimScenarioConfig>) -> Self {
        let outcomes = &scenario.outcomes;
        let (alpha, outcome_range, q) = match (outcomes.alpha(), outcomes.intervals()) {
            (Some(alpha), [first, .., last]) => (Some(alpha), Some([first.low, last.high]), None),
            (Some(alpha), [only]) => (Some(alpha), Some([only.low, only.high]), None),
            _ => (None, None, Some(outcomes.valuations().to_vec())),
        };
        Self {
            m: scenario.setting.m_count(),
            n: scenario.setting.n_count(),
            alpha,
            outcome_range,
            q,
            probs: scenario.setting.probs().to_vec(),
            costs: scenario.setting.costs().to_vec(),
            r_s: scenario.market.subscription_fee,
            c_t: scenario.market.training_cost,
            generated_from,
        }
    }

    /// Validates every field and builds the scenario.
    pub fn to_scenario(&self) -> Result<Scenario> {
        if self.probs.len() != self.n {
            bail!("\"P\" has {} rows but n = {}", self.probs.len(), self.n);
        }
        for (i, row) in self.probs.iter().enumerate() {
            if row.len() != self.m {
                bail!("\"P\" row {i} has {} entries but m = {}", row.len(), self.m);
            }
        }
        if self.costs.len() != self.n {
            bail!("\"c\" has {} entries but n = {}", self.costs.len(), self.n);
        }
        let outcomes = match (self.alpha, self.outcome_range, &self.q) {
            (Some(alpha), Some([low, high]), None) => {
                OutcomeSpace::from_range(low, high, self.m, alpha).context("invalid \"alpha\"/\"outcome_range\"")?
            }
            (None, None, Some(q)) => {
                if q.len() != self.m {
                    bail!("\"q\" has {} entries but m = {}", q.len(), self.m);
                }
                OutcomeSpace::from_valuations(q.clone()).context("invalid \"q\"")?
            }
            _ => bail!("exactly one of \"alpha\" + \"outcome_range\" or \"q\" must be present"),
        };
        let setting = AgentSetting::new(self.probs.clone(), self.costs.clone()).context("invalid agent setting")?;
        let market = MarketParams::new(self.r_s, self.c_t).context("invalid \"r_s\"/\"c_t\"")?;
        Ok(Scenario::new(setting, outcomes, market)?)
    }

    /// Short content hash of the game itself (provenance excluded).
    pub fn digest(&self) -> String {
        let canonical = Self {
            generated_from: None,
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("scenario serialises");
        let full = hex::encode(Sha256::digest(&bytes));
        full[..DIGEST_LEN].to_string()
    }
}

pub fn scenario_digest(scenario: &Scenario) -> String {
    ScenarioFile::from_scenario(scenario, None).digest()
}

pub fn parse_scenario(text: &str) -> Result<(Scenario, ScenarioFile)> {
    let file: ScenarioFile = serde_json::from_str(text).context("parsing scenario")?;
    let scenario = file.to_scenario()?;
    Ok((scenario, file))
}

pub fn load_scenario(path: &Path) -> Result<(Scenario, ScenarioFile)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("loading scenario {}", path.display()))
}

pub fn save_scenario(path: &Path, file: &ScenarioFile) -> Result<()> {
    let text = serde_json::to_string_pretty(file)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// One line of a logs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub contract: Vec<f64>,
    pub principal_utility: f64,
    pub agent_action: i8,
}

impl From<&InteractionLog> for LogLine {
    fn from(log: &InteractionLog) -> Self {
        Self {
            contract: log.contract.payments().to_vec(),
            principal_utility: log.principal_utility,
            agent_action: log.acceptance.indicator(),
        }
    }
}

impl LogLine {
    pub fn to_log(&self) -> Result<InteractionLog> {
        let Some(acceptance) = Acceptance::from_indicator(self.agent_action.into()) else {
            bail!("agent_action must be 1 or -1, got {}", self.agent_action);
        };
        Ok(InteractionLog::new(
            Contract::new(self.contract.clone())?,
            self.principal_utility,
            acceptance,
        )?)
    }
}

pub fn load_logs(path: &Path) -> Result<Vec<InteractionLog>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut logs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogLine =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad log record", path.display(), i + 1))?;
        logs.push(rec.to_log().with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(logs)
}

pub fn save_logs(path: &Path, logs: &[InteractionLog]) -> Result<()> {
    let mut out = std::io::BufWriter::new(
        fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    for log in logs {
        serde_json::to_writer(&mut out, &LogLine::from(log))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use contractlab_core::model::generate_sim_setting;

    #[test]
    fn digest_ignores_provenance_and_tracks_content() {
        let cfg = SimScenarioConfig::new(2, 3, 1);
        let s = generate_sim_setting(&cfg).unwrap();
        let a = ScenarioFile::from_scenario(&s, Some(cfg));
        let b = ScenarioFile::from_scenario(&s, None);
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), DIGEST_LEN);
        let mut c = b.clone();
        c.costs[0] += 1e-12;
        assert_ne!(c.digest(), b.digest());
    }

    #[test]
    fn alpha_form_round_trips() {
        let mut cfg = SimScenarioConfig::new(3, 2, 5);
        cfg.alpha = Some(0.005);
        let s = generate_sim_setting(&cfg).unwrap();
        let file = ScenarioFile::from_scenario(&s, None);
        assert!(file.q.is_none() && file.alpha == Some(0.005));
        let back = file.to_scenario().unwrap();
        assert_eq!(back.outcomes.valuations(), s.outcomes.valuations());
    }

    #[test]
    fn invalid_files_are_rejected() {
        let text = r#"{"m": 2, "n": 1, "q": [0, 1], "P": [[0.5, 0.4]], "c": [0], "r_s": 0, "c_t": 0}"#;
        let err = format!("{:#}", parse_scenario(text).unwrap_err());
        assert!(err.contains("row 0"), "{err}");
        let text = r#"{"m": 2, "n": 2, "q": [0, 1], "P": [[0.5, 0.5], [1, 0]], "c": [0], "r_s": 0, "c_t": 0}"#;
        assert!(format!("{:#}", parse_scenario(text).unwrap_err()).contains("\"c\""));
        let both = r#"{"m": 1, "n": 1, "q": [1], "alpha": 1, "outcome_range": [0, 1], "P": [[1]], "c": [0]}"#;
        assert!(parse_scenario(both).is_err());
    }
}
