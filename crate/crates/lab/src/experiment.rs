//! Benchmark orchestration: run a method on a scenario, score the derived
//! contract, and persist rows that can be replayed exactly.
//!
//! A bench directory holds
//!
//! ```text
//! results.csv              one row per (cell, repeat), floats at 9 significant digits
//! results.jsonl            the same rows at full precision, with the contract
//! scenarios/<digest>.json  every scenario referenced by a row
//! traces/*.csv             bandit utility traces
//! runs/*/                  evolution artifacts
//! ```

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use contractlab_core::bandit::{bandit_run, RewardMode, TraceEntry, DEFAULT_GRID_SIZE};
use contractlab_core::design::{optimize_contract, DesignOptions};
use contractlab_core::evolution::{
    evolve, zero_shot_transfer, EvaluationContext, EvolutionOutcome, EvolutionParams, LlmBackend, NativeRunner,
    ScriptedLlm, SolverRunner, SEED_SOURCE,
};
use contractlab_core::inference::{seed_solve, DEFAULT_N_HAT};
use contractlab_core::metrics::{compute_metrics_with_oracle, MetricsReport};
use contractlab_core::model::{generate_random_logs, generate_sim_setting, ContractSampler};
use contractlab_core::{Contract, InteractionLog, Scenario, SimScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::artifacts::write_run_artifacts;
use crate::llm::{scripted_from_file, BudgetedLlm, LiveConfig, LiveLlm, RecordingLlm, ReplayLlm};
use crate::sandbox::{SandboxConfig, SubprocessSandbox};
use crate::scenario_io::{load_scenario, save_scenario, ScenarioFile};

pub const CSV_HEADER: [&str; 14] = [
    "scenario_digest",
    "method",
    "K",
    "M",
    "N",
    "alpha",
    "repeat",
    "seed",
    "pi_T",
    "pi_T_pct",
    "pi_A",
    "pi_A_pct",
    "eta",
    "status",
];

/// Written in place of ratios whose baseline is zero.
pub const UNDEFINED: &str = "undefined";

/// Seed offset between consecutive repeats of a cell.
pub const REPEAT_SEED_STRIDE: u64 = 1_000_003;

pub const DEFAULT_REPEATS: usize = 5;

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let rounded: f64 = sci.parse().expect("formatted float parses");
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{rounded:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_opt(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), format_sig9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Seed,
    Bandit,
    ZeroShot,
    Evolve,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Seed, Method::Bandit, Method::ZeroShot, Method::Evolve, Method::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Seed => "seed",
            Method::Bandit => "bandit",
            Method::ZeroShot => "zero-shot",
            Method::Evolve => "evolve",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .with_context(|| format!("unknown method {s:?} (expected seed, bandit, zero-shot, evolve or oracle)"))
    }
}

/// Language model used by the evolution method.
#[derive(Debug, Clone, Default)]
pub enum LlmSpec {
    /// Scripted answers from a JSON file; without one, every role answers
    /// with the seed solver.
    #[default]
    Mock,
    MockScript(PathBuf),
    Replay(PathBuf),
    Live(LiveConfig),
}

/// Where candidate solvers run.
#[derive(Debug, Clone, Default)]
pub enum RunnerSpec {
    /// In-process; only the seed solver source is known.
    #[default]
    Native,
    Sandbox(SandboxConfig),
}

#[derive(Debug, Clone)]
pub struct MethodParams {
    /// Action count guessed by the seed solver.
    pub n_hat: usize,
    pub bandit_grid: usize,
    /// Bandit pulls; `None` spends the log budget `K`.
    pub bandit_rounds: Option<usize>,
    pub evolution: EvolutionParams,
    pub llm: LlmSpec,
    pub max_llm_calls: Option<usize>,
    /// Where exchanges with the language model are appended, if anywhere.
    pub record_transcript: Option<PathBuf>,
    pub runner: RunnerSpec,
    /// Solver applied by the zero-shot method; the seed solver when unset.
    pub transfer_source: Option<String>,
    pub design: DesignOptions,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            n_hat: DEFAULT_N_HAT,
            bandit_grid: DEFAULT_GRID_SIZE,
            bandit_rounds: None,
            evolution: EvolutionParams::default(),
            llm: LlmSpec::default(),
            max_llm_calls: None,
            record_transcript: None,
            runner: RunnerSpec::default(),
            transfer_source: None,
            design: DesignOptions::default(),
        }
    }
}

impl MethodParams {
    pub fn validate(&self, method: Method, k: usize) -> Result<()> {
        match method {
            Method::Seed if self.n_hat == 0 => bail!("n_hat must be positive"),
            Method::Bandit => {
                let rounds = self.bandit_rounds.unwrap_or(k);
                if self.bandit_grid == 0 {
                    bail!("bandit grid size must be positive");
                }
                if rounds < self.bandit_grid {
                    bail!("bandit needs at least {} rounds, got {rounds}", self.bandit_grid);
                }
            }
            Method::Evolve => self.evolution.validate()?,
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum ScenarioSource {
    Simulated { m: usize, n: usize, alpha: Option<f64> },
    File(PathBuf),
    Given(Box<Scenario>),
}

/// One (scenario, K, method) cell of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub k: usize,
    pub method: Method,
    pub params: MethodParams,
    pub rng_seed: u64,
    pub repeats: usize,
    /// Artifact directory; nothing beyond the returned rows is written when
    /// unset.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSource, k: usize, method: Method, rng_seed: u64) -> Self {
        Self {
            scenario,
            k,
            method,
            params: MethodParams::default(),
            rng_seed,
            repeats: 1,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            bail!("K must be at least 1");
        }
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        if let ScenarioSource::Simulated { m, n, alpha } = self.scenario {
            if m == 0 || n == 0 {
                bail!("M and N must be positive");
            }
            if alpha.is_some_and(|a| !(a.is_finite() && a > 0.0)) {
                bail!("alpha must be positive");
            }
        }
        self.params.validate(self.method, self.k)
    }
}

/// Builds the cell's scenario. Simulated scenarios are drawn from the cell
/// seed, so every repeat of a cell shares one scenario.
pub fn resolve_scenario(source: &ScenarioSource, rng_seed: u64) -> Result<(Scenario, ScenarioFile)> {
    match source {
        ScenarioSource::Simulated { m, n, alpha } => {
            let mut cfg = SimScenarioConfig::new(*m, *n, rng_seed);
            cfg.alpha = *alpha;
            let s = generate_sim_setting(&cfg)?;
            let file = ScenarioFile::from_scenario(&s, Some(cfg));
            Ok((s, file))
        }
        ScenarioSource::File(path) => load_scenario(path),
        ScenarioSource::Given(s) => Ok(((**s).clone(), ScenarioFile::from_scenario(s, None))),
    }
}

pub fn repeat_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(REPEAT_SEED_STRIDE.wrapping_mul(repeat as u64))
}

/// One result row at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario_digest: String,
    pub method: Method,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub contract: Vec<f64>,
    pub metrics: MetricsReport,
    pub status: String,
}

impl ResultRow {
    pub fn csv_record(&self) -> [String; 14] {
        [
            self.scenario_digest.clone(),
            self.method.to_string(),
            self.k.to_string(),
            self.m.to_string(),
            self.n.to_string(),
            self.alpha.map(format_sig9).unwrap_or_default(),
            self.repeat.to_string(),
            self.seed.to_string(),
            format_sig9(self.metrics.pi_t),
            format_opt(self.metrics.pi_t_pct),
            format_sig9(self.metrics.pi_a),
            format_opt(self.metrics.pi_a_pct),
            format_opt(self.metrics.eta),
            self.status.clone(),
        ]
    }
}

/// What a method produced for one repeat.
pub struct MethodOutput {
    pub contract: Contract,
    /// `"ok"`, `"partial"` or `"failed:<kind>"`.
    pub status: String,
    pub bandit_trace: Option<Vec<TraceEntry>>,
    pub evolution: Option<EvolutionOutcome>,
}

impl MethodOutput {
    fn ok(contract: Contract) -> Self {
        Self {
            contract,
            status: "ok".into(),
            bandit_trace: None,
            evolution: None,
        }
    }

    fn failed(m: usize, kind: &str) -> Self {
        Self {
            contract: Contract::zero(m),
            status: format!("failed:{kind}"),
            bandit_trace: None,
            evolution: None,
        }
    }
}

fn build_llm(params: &MethodParams) -> Result<Box<dyn LlmBackend>> {
    let base: Box<dyn LlmBackend> = match &params.llm {
        LlmSpec::Mock => Box::new(ScriptedLlm::echo(&format!("```python\n{SEED_SOURCE}\n```"))),
        LlmSpec::MockScript(path) => Box::new(scripted_from_file(path)?),
        LlmSpec::Replay(path) => Box::new(ReplayLlm::load(path)?),
        LlmSpec::Live(cfg) => Box::new(LiveLlm::new(cfg.clone()).map_err(|e| anyhow::anyhow!("{e}"))?),
    };
    let recorded: Box<dyn LlmBackend> = match &params.record_transcript {
        Some(path) => Box::new(RecordingLlm::create(base, path)?),
        None => base,
    };
    Ok(match params.max_llm_calls {
        Some(n) => Box::new(BudgetedLlm::new(recorded, n)),
        None => recorded,
    })
}

fn build_runner(params: &MethodParams, scenario: &Scenario) -> Box<dyn SolverRunner> {
    match &params.runner {
        RunnerSpec::Native => Box::new(NativeRunner::with_seed(scenario.market)),
        RunnerSpec::Sandbox(cfg) => Box::new(SubprocessSandbox::new(cfg.clone())),
    }
}

/// Runs one method on one set of logs. Method failures become a null
/// contract with a failure status; configuration problems are errors.
pub fn run_method(
    method: Method,
    params: &MethodParams,
    truth: &Scenario,
    logs: &[InteractionLog],
    seed: u64,
) -> Result<MethodOutput> {
    let m = truth.outcomes.m_count();
    Ok(match method {
        Method::Oracle => MethodOutput::ok(optimize_contract(truth, &params.design).contract),
        Method::Seed => match seed_solve(logs, &truth.outcomes, &truth.market, params.n_hat, seed) {
            Ok(sol) => {
                let inferred = truth.with_setting(sol.setting)?;
                MethodOutput::ok(optimize_contract(&inferred, &params.design).contract)
            }
            Err(e) => {
                log::info!("seed solver failed: {e}");
                MethodOutput::failed(m, "no-accepted-logs")
            }
        },
        Method::Bandit => {
            let rounds = params.bandit_rounds.unwrap_or(logs.len());
            let run = bandit_run(truth, rounds, params.bandit_grid, RewardMode::Expected, seed)?;
            MethodOutput {
                contract: run.best_contract,
                status: "ok".into(),
                bandit_trace: Some(run.trace),
                evolution: None,
            }
        }
        Method::ZeroShot => {
            let source = params.transfer_source.as_deref().unwrap_or(SEED_SOURCE);
            let mut runner = build_runner(params, truth);
            let t = zero_shot_transfer(source, &mut runner, truth, logs);
            match t.failure {
                None => MethodOutput::ok(t.solution.contract),
                Some(f) => MethodOutput::failed(m, f.kind.as_str()),
            }
        }
        Method::Evolve => {
            let mut llm = build_llm(params)?;
            let mut runner = build_runner(params, truth);
            let mut ctx = EvaluationContext::new(truth.clone(), logs.to_vec());
            ctx.design = params.design;
            let outcome = evolve(SEED_SOURCE, &ctx, &params.evolution, &mut llm, &mut runner, seed)?;
            let (contract, mut status) = match outcome.elitist.as_ref().and_then(|e| e.contract.clone()) {
                Some(c) => (c, "ok".to_string()),
                None => (Contract::zero(m), "failed:no-candidate".to_string()),
            };
            if outcome.history.partial && status == "ok" {
                status = "partial".into();
            }
            MethodOutput {
                contract,
                status,
                bandit_trace: None,
                evolution: Some(outcome),
            }
        }
    })
}

/// Directory and file stem used for a row's artifacts.
pub fn run_label(row: &ResultRow) -> String {
    format!("{}-{}-k{}-r{}", row.method, row.scenario_digest, row.k, row.repeat)
}

pub fn write_bandit_trace(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["round", "arm_index", "beta", "reward"])?;
    for e in trace {
        w.write_record([
            e.round.to_string(),
            e.arm_index.to_string(),
            e.beta.map(format_sig9).unwrap_or_default(),
            format_sig9(e.reward),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every repeat of one cell. Repeats share the scenario; logs and the
/// method's randomness come from the repeat seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let (truth, file) = resolve_scenario(&config.scenario, config.rng_seed)?;
    let digest = file.digest();
    let oracle = optimize_contract(&truth, &config.params.design);
    let alpha = truth.outcomes.alpha();
    if let Some(dir) = &config.out_dir {
        let sdir = dir.join("scenarios");
        fs::create_dir_all(&sdir)?;
        save_scenario(&sdir.join(format!("{digest}.json")), &file)?;
    }

    let mut rows = Vec::with_capacity(config.repeats);
    for repeat in 0..config.repeats {
        let seed = repeat_seed(config.rng_seed, repeat);
        let logs = generate_random_logs(&truth, config.k, ContractSampler::default(), seed)?;
        let out = run_method(config.method, &config.params, &truth, &logs, seed)?;
        let metrics = compute_metrics_with_oracle(&out.contract, &oracle.contract, &truth)?;
        let row = ResultRow {
            scenario_digest: digest.clone(),
            method: config.method,
            k: config.k,
            m: truth.setting.m_count(),
            n: truth.setting.n_count(),
            alpha,
            repeat,
            seed,
            contract: out.contract.payments().to_vec(),
            metrics,
            status: out.status,
        };
        if let Some(dir) = &config.out_dir {
            if let Some(trace) = &out.bandit_trace {
                let tdir = dir.join("traces");
                fs::create_dir_all(&tdir)?;
                write_bandit_trace(&tdir.join(format!("{}.csv", run_label(&row))), trace)?;
            }
            if let Some(outcome) = &out.evolution {
                write_run_artifacts(&dir.join("runs").join(run_label(&row)), outcome)?;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Grids of a sweep. Every combination is one cell; scenario files override
/// the `m`/`n` grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "K", alias = "k")]
    pub k: Vec<usize>,
    #[serde(rename = "M", alias = "m", default)]
    pub m: Vec<usize>,
    #[serde(rename = "N", alias = "n", default)]
    pub n: Vec<usize>,
    /// `null` entries draw valuations uniformly instead of from `alpha`.
    #[serde(default)]
    pub alpha: Vec<Option<f64>>,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub repeats: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing sweep config {}", path.display()))
    }

    /// Expands the grid, in K, M, N, alpha, method order.
    pub fn cells(&self, base: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        if self.k.is_empty() || self.methods.is_empty() {
            bail!("sweep needs at least one K and one method");
        }
        let alphas = if self.alpha.is_empty() { vec![None] } else { self.alpha.clone() };
        let shapes: Vec<ScenarioSource> = match &self.scenario {
            Some(path) => vec![ScenarioSource::File(path.clone())],
            None => {
                if self.m.is_empty() || self.n.is_empty() {
                    bail!("sweep without a scenario file needs M and N grids");
                }
                let mut v = Vec::new();
                for &m in &self.m {
                    for &n in &self.n {
                        for &alpha in &alphas {
                            v.push(ScenarioSource::Simulated { m, n, alpha });
                        }
                    }
                }
                v
            }
        };
        let mut cells = Vec::new();
        for &k in &self.k {
            for shape in &shapes {
                for &method in &self.methods {
                    let mut c = base.clone();
                    c.k = k;
                    c.method = method;
                    c.scenario = shape.clone();
                    if let Some(r) = self.repeats {
                        c.repeats = r;
                    }
                    if let Some(s) = self.seed {
                        c.rng_seed = s;
                    }
                    cells.push(c);
                }
            }
        }
        Ok(cells)
    }
}

/// Runs cells on up to `jobs` threads and writes `results.csv` and
/// `results.jsonl` in cell order, independent of scheduling.
pub fn run_bench(cells: &[ExperimentConfig], out_dir: &Path, jobs: usize) -> Result<Vec<ResultRow>> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for c in cells {
        c.validate()?;
    }
    let slots: Vec<Mutex<Option<Result<Vec<ResultRow>>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let mut cell = cells[i].clone();
                cell.out_dir = Some(out_dir.to_path_buf());
                let result = run_experiment(&cell);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });

    let mut rows = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        let result = slot.into_inner().expect("result slot").expect("every cell ran");
        rows.extend(result.with_context(|| format!("cell {i} ({})", cells[i].method))?);
    }
    write_results(out_dir, &rows)?;
    Ok(rows)
}

pub fn write_results(out_dir: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(out_dir.join("results.csv"))?;
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush()?;
    let mut side = std::io::BufWriter::new(fs::File::create(out_dir.join("results.jsonl"))?);
    for row in rows {
        serde_json::to_writer(&mut side, row)?;
        side.write_all(b"\n")?;
    }
    side.flush()?;
    Ok(())
}

pub fn read_result_rows(out_dir: &Path) -> Result<Vec<ResultRow>> {
    let path = out_dir.join("results.jsonl");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Outcome of re-simulating one stored row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCheck {
    pub row: usize,
    pub stored_pi_t: f64,
    pub replayed_pi_t: f64,
    /// The CSV cell equals the replayed value printed the same way.
    pub csv_matches: bool,
}

impl ReplayCheck {
    pub fn abs_error(&self) -> f64 {
        (self.stored_pi_t - self.replayed_pi_t).abs()
    }
}

/// Re-simulates every stored contract against its stored scenario (looked
/// up by digest) and compares principal utilities with the CSV and the
/// full-precision sidecar.
pub fn replay_bench(out_dir: &Path) -> Result<Vec<ReplayCheck>> {
    let rows = read_result_rows(out_dir)?;
    let mut reader = csv::Reader::from_path(out_dir.join("results.csv"))?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(CSV_HEADER) {
        bail!("unexpected CSV header {headers:?}");
    }
    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    if records.len() != rows.len() {
        bail!("{} CSV rows but {} sidecar rows", records.len(), rows.len());
    }
    let mut checks = Vec::with_capacity(rows.len());
    for (i, (row, rec)) in rows.iter().zip(&records).enumerate() {
        if rec.get(0) != Some(row.scenario_digest.as_str()) || rec.get(7) != Some(row.seed.to_string().as_str()) {
            bail!("row {i}: CSV and sidecar disagree on digest or seed");
        }
        let path = out_dir.join("scenarios").join(format!("{}.json", row.scenario_digest));
        let (scenario, file) = load_scenario(&path)?;
        if file.digest() != row.scenario_digest {
            bail!("row {i}: stored scenario does not hash to {}", row.scenario_digest);
        }
        let contract = Contract::new(row.contract.clone())?;
        let replayed = scenario.principal_utility(&contract)?;
        checks.push(ReplayCheck {
            row: i,
            stored_pi_t: row.metrics.pi_t,
            replayed_pi_t: replayed,
            csv_matches: rec.get(8) == Some(format_sig9(replayed).as_str()),
        });
    }
    Ok(checks)
}
