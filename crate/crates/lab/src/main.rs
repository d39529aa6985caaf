use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use contractlab::experiment::{
    replay_bench, resolve_scenario, run_bench, run_label, run_experiment, write_bandit_trace, ExperimentConfig, LlmSpec, Method,
    MethodParams, RunnerSpec, ScenarioSource, SweepConfig, DEFAULT_REPEATS,
};
use contractlab::llm::{LiveConfig, DEFAULT_API_KEY_ENV, DEFAULT_ENDPOINT, DEFAULT_MODEL};
use contractlab::report::{render_table, summarize};
use contractlab::sandbox::SandboxConfig;
use contractlab::scenario_io::{load_logs, load_scenario, save_logs, save_scenario, ScenarioFile};
use contractlab_core::bandit::{bandit_run, RewardMode, DEFAULT_GRID_SIZE};
use contractlab_core::design::{optimize_contract, DesignOptions};
use contractlab_core::evolution::EvolutionParams;
use contractlab_core::inference::{seed_solve, validate_setting, DEFAULT_N_HAT};
use contractlab_core::model::{generate_random_logs, ContractSampler};

#[derive(Parser)]
#[command(name = "contractlab", version, about = "Learn and design incentive contracts from interaction logs")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory (meaning depends on the subcommand).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Repeats per experiment cell.
    #[arg(long, global = true, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated scenario and/or random interaction logs.
    Gen(GenArgs),
    /// Infer an agent setting from logs with the seed solver.
    SeedSolve(SeedSolveArgs),
    /// Compute the optimal contract for a scenario.
    Optimize(ScenarioArg),
    /// Check a scenario's setting against logs.
    Validate(ValidateArgs),
    /// Learn a linear contract with UCB1.
    Bandit(BanditArgs),
    /// Evolve solver candidates with a language model.
    Evolve(EvolveArgs),
    /// Run benchmark methods over a sweep and write results.csv.
    Bench(BenchArgs),
    /// Summarise a results CSV.
    Report(ReportArgs),
    /// Re-simulate every row of a bench directory.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file.
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    /// Outcome count.
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Action count (including the default action).
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Derive valuations as ln(1 + alpha * median) instead of uniform draws.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    /// Existing scenario to draw logs from; a simulated one is created
    /// otherwise.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// Number of logs.
    #[arg(long, default_value_t = 100)]
    k: usize,
}

#[derive(Args)]
struct SeedSolveArgs {
    /// Scenario file; only its outcome space and market are used.
    #[arg(long)]
    scenario: PathBuf,
    /// Interaction logs (JSON lines).
    #[arg(long)]
    logs: PathBuf,
    /// Number of candidate actions to cluster into.
    #[arg(long, default_value_t = DEFAULT_N_HAT)]
    n_hat: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file holding the setting to check.
    #[arg(long)]
    scenario: PathBuf,
    /// Interaction logs (JSON lines).
    #[arg(long)]
    logs: PathBuf,
    /// Slack allowed on every feasibility constraint.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Expected,
    Sampled,
}

#[derive(Args)]
struct BanditArgs {
    /// Scenario file describing the true agent.
    #[arg(long)]
    scenario: PathBuf,
    /// Number of contracts posted.
    #[arg(long, default_value_t = 300)]
    rounds: usize,
    /// Number of arms on the linear contract grid.
    #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
    grid: usize,
    /// Reward per round: expected principal utility or a sampled outcome.
    #[arg(long, value_enum, default_value = "expected")]
    mode: ModeArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LlmArg {
    Mock,
    Replay,
    Live,
}

#[derive(Args)]
struct LlmArgs {
    /// Language model backend.
    #[arg(long, value_enum, default_value = "mock")]
    llm: LlmArg,
    /// JSON file of scripted answers per role, for `--llm mock`.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Recorded transcript (JSON lines), for `--llm replay`.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Append every exchange to this transcript file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Hard cap on language model calls; exceeding it fails the run.
    #[arg(long)]
    max_llm_calls: Option<usize>,
    /// Base URL of an OpenAI-compatible chat completions API.
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    endpoint: String,
    /// Model name sent to the live endpoint.
    #[arg(long, default_value = DEFAULT_MODEL)]
    model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    api_key_env: String,
    /// Runner executable; candidates run in-process (seed only) when absent.
    #[arg(long)]
    sandbox: Option<PathBuf>,
    /// Extra argument placed before `--source` (repeatable).
    #[arg(long = "sandbox-arg", allow_hyphen_values = true)]
    sandbox_args: Vec<String>,
    /// Per-candidate time limit in seconds.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    /// Solver source used by the zero-shot method.
    #[arg(long)]
    transfer_source: Option<PathBuf>,
}

impl LlmArgs {
    fn method_params(&self) -> Result<MethodParams> {
        let llm = match self.llm {
            LlmArg::Mock => match &self.mock_script {
                Some(p) => LlmSpec::MockScript(p.clone()),
                None => LlmSpec::Mock,
            },
            LlmArg::Replay => LlmSpec::Replay(self.transcript.clone().context("--llm replay needs --transcript")?),
            LlmArg::Live => LlmSpec::Live(LiveConfig {
                endpoint: self.endpoint.clone(),
                model: self.model.clone(),
                api_key_env: self.api_key_env.clone(),
                ..LiveConfig::default()
            }),
        };
        let runner = match &self.sandbox {
            Some(program) => RunnerSpec::Sandbox(SandboxConfig {
                prefix_args: self.sandbox_args.clone(),
                timeout_secs: self.timeout,
                grace: Duration::from_secs(5),
                ..SandboxConfig::new(program)
            }),
            None => RunnerSpec::Native,
        };
        let transfer_source = match &self.transfer_source {
            Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        Ok(MethodParams {
            llm,
            runner,
            max_llm_calls: self.max_llm_calls,
            record_transcript: self.record.clone(),
            transfer_source,
            ..MethodParams::default()
        })
    }
}

#[derive(Args)]
struct EvolveArgs {
    /// Scenario file; a simulated scenario is created otherwise.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// Number of interaction logs the candidates see.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Evaluation budget.
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Candidates generated from the seed before the first epoch.
    #[arg(long, default_value_t = 10)]
    init_size: usize,
    /// Parents selected per epoch (must be even).
    #[arg(long, default_value_t = 10)]
    selection_size: usize,
    /// Mutations of the elitist per epoch.
    #[arg(long, default_value_t = 2)]
    mutation_count: usize,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep config (JSON grids over K/M/N/alpha/methods); overrides the
    /// single-cell flags below.
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Scenario file used for every cell instead of simulated ones.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// Number of interaction logs per cell.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Comma-separated methods to run in every cell.
    #[arg(long, value_delimiter = ',', default_value = "seed,bandit,zero-shot,evolve,oracle")]
    methods: Vec<Method>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Evaluation budget of the evolve method.
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// results.csv, or a bench directory containing it.
    path: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Bench directory.
    dir: PathBuf,
    /// Largest tolerated difference in principal utility.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn scenario_source(scenario: &Option<PathBuf>, sim: &SimArgs) -> ScenarioSource {
    match scenario {
        Some(p) => ScenarioSource::File(p.clone()),
        None => ScenarioSource::Simulated {
            m: sim.m,
            n: sim.n,
            alpha: sim.alpha,
        },
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen(args) => {
            let dir = out.unwrap_or(Path::new("."));
            std::fs::create_dir_all(dir)?;
            let (scenario, file) = resolve_scenario(&scenario_source(&args.scenario, &args.sim), cli.seed)?;
            if args.k == 0 {
                bail!("--k must be at least 1");
            }
            let logs = generate_random_logs(&scenario, args.k, ContractSampler::default(), cli.seed)?;
            save_scenario(&dir.join("scenario.json"), &file)?;
            save_logs(&dir.join("logs.jsonl"), &logs)?;
            println!("scenario {} with {} logs written to {}", file.digest(), logs.len(), dir.display());
        }
        Command::SeedSolve(args) => {
            let (truth, _) = load_scenario(&args.scenario)?;
            let logs = load_logs(&args.logs)?;
            let sol = seed_solve(&logs, &truth.outcomes, &truth.market, args.n_hat, cli.seed)?;
            log::info!(
                "{} candidate distributions, {} logs skipped",
                sol.candidates.vectors.len(),
                sol.skipped_logs
            );
            let inferred = truth.with_setting(sol.setting)?;
            print_json(&ScenarioFile::from_scenario(&inferred, None), out)?;
        }
        Command::Optimize(args) => {
            let (scenario, _) = load_scenario(&args.scenario)?;
            let sol = optimize_contract(&scenario, &DesignOptions::default());
            print_json(&sol, out)?;
        }
        Command::Validate(args) => {
            let (scenario, _) = load_scenario(&args.scenario)?;
            let logs = load_logs(&args.logs)?;
            let report = validate_setting(&scenario, &logs, args.tol)?;
            if report.overall_consistent {
                println!("consistent");
            } else {
                let c = report.counts;
                println!(
                    "inconsistent: {} utility-mismatch, {} ir, {} ic, {} rejection",
                    c.utility_mismatch, c.ir_violation, c.ic_violation, c.rejection_violation
                );
                return Ok(ExitCode::from(1));
            }
        }
        Command::Bandit(args) => {
            let (scenario, _) = load_scenario(&args.scenario)?;
            let mode = match args.mode {
                ModeArg::Expected => RewardMode::Expected,
                ModeArg::Sampled => RewardMode::Sampled,
            };
            let run = bandit_run(&scenario, args.rounds, args.grid, mode, cli.seed)?;
            if let Some(path) = out {
                write_bandit_trace(path, &run.trace)?;
            }
            println!(
                "best arm {} contract {:?} utility {}",
                run.best_arm,
                run.best_contract.payments(),
                scenario.principal_utility(&run.best_contract)?
            );
        }
        Command::Evolve(args) => {
            let mut params = args.llm.method_params()?;
            params.evolution = EvolutionParams {
                init_size: args.init_size,
                selection_size: args.selection_size,
                mutation_count: args.mutation_count,
                budget: args.iters,
            };
            let mut cfg = ExperimentConfig::new(scenario_source(&args.scenario, &args.sim), args.k, Method::Evolve, cli.seed);
            cfg.params = params;
            cfg.out_dir = out.map(Path::to_path_buf);
            let rows = run_experiment(&cfg)?;
            let row = &rows[0];
            println!("status {} pi_T {} contract {:?}", row.status, row.metrics.pi_t, row.contract);
            if let Some(d) = out {
                let run_dir = d.join("runs").join(run_label(row));
                println!("history digest {}", read_history_digest(&run_dir)?);
                println!("artifacts in {}", run_dir.display());
            }
        }
        Command::Bench(args) => {
            let dir = out.unwrap_or(Path::new("bench-out"));
            let mut base = ExperimentConfig::new(scenario_source(&args.scenario, &args.sim), args.k, Method::Oracle, cli.seed);
            base.repeats = cli.repeats;
            base.params = args.llm.method_params()?;
            base.params.evolution.budget = args.iters;
            let cells = match &args.sweep {
                Some(path) => SweepConfig::load(path)?.cells(&base)?,
                None => args
                    .methods
                    .iter()
                    .map(|&m| ExperimentConfig { method: m, ..base.clone() })
                    .collect(),
            };
            let jobs = args
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = run_bench(&cells, dir, jobs)?;
            println!("{} rows written to {}", rows.len(), dir.join("results.csv").display());
        }
        Command::Report(args) => {
            let path = if args.path.is_dir() {
                args.path.join("results.csv")
            } else {
                args.path
            };
            print!("{}", render_table(&summarize(&path)?));
        }
        Command::Replay(args) => {
            let checks = replay_bench(&args.dir)?;
            let bad: Vec<_> = checks
                .iter()
                .filter(|c| !(c.abs_error() <= args.tol && c.csv_matches))
                .collect();
            for c in &bad {
                println!(
                    "row {}: stored {} replayed {} (csv match: {})",
                    c.row, c.stored_pi_t, c.replayed_pi_t, c.csv_matches
                );
            }
            println!("{} of {} rows replay within {}", checks.len() - bad.len(), checks.len(), args.tol);
            if !bad.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_history_digest(run_dir: &Path) -> Result<String> {
    let path = run_dir.join("history.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    v["digest"].as_str().map(str::to_string).context("history.json without digest")
}
