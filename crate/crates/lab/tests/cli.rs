use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contractlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "stdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    o
}

fn digest_line(o: &Output) -> String {
    stdout(o)
        .lines()
        .find(|l| l.starts_with("history digest "))
        .expect("digest printed")
        .to_string()
}

#[test]
fn generated_logs_validate_against_their_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(cli(d, &["--seed", "3", "--out", "g", "gen", "--m", "3", "--n", "4", "--k", "60"]));
    let o = ok(cli(d, &["validate", "--scenario", "g/scenario.json", "--logs", "g/logs.jsonl"]));
    assert_eq!(stdout(&o).trim(), "consistent");

    // every log line follows the documented schema
    let logs = fs::read_to_string(d.join("g/logs.jsonl")).unwrap();
    assert_eq!(logs.lines().count(), 60);
    let first: serde_json::Value = serde_json::from_str(logs.lines().next().unwrap()).unwrap();
    for key in ["contract", "principal_utility", "agent_action"] {
        assert!(first.get(key).is_some(), "{key} missing");
    }

    // a scenario whose costs differ no longer explains the logs
    let mut scenario: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("g/scenario.json")).unwrap()).unwrap();
    for c in scenario["c"].as_array_mut().unwrap() {
        *c = serde_json::json!(c.as_f64().unwrap() + 0.5);
    }
    fs::write(d.join("wrong.json"), scenario.to_string()).unwrap();
    let o = cli(d, &["validate", "--scenario", "wrong.json", "--logs", "g/logs.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("inconsistent"));
}

#[test]
fn bench_writes_one_row_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = ok(cli(
        d,
        &["--repeats", "1", "--out", "b", "bench", "--m", "2", "--n", "2", "--k", "100", "--methods", "seed,bandit,oracle"],
    ));
    assert!(stdout(&o).contains("3 rows"));
    let csv = fs::read_to_string(d.join("b/results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "scenario_digest,method,K,M,N,alpha,repeat,seed,pi_T,pi_T_pct,pi_A,pi_A_pct,eta,status"
    );
    let methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["seed", "bandit", "oracle"]);
    let oracle: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(oracle[12], "1");

    let o = ok(cli(d, &["replay", "b"]));
    assert!(stdout(&o).contains("3 of 3 rows replay"));
    let o = ok(cli(d, &["report", "b"]));
    let table = stdout(&o);
    assert!(table.starts_with("method"));
    assert_eq!(table.lines().count(), 4);

    let trace = fs::read_dir(d.join("b/traces")).unwrap().next().unwrap().unwrap().path();
    let trace = fs::read_to_string(trace).unwrap();
    assert_eq!(trace.lines().next(), Some("round,arm_index,beta,reward"));
    assert_eq!(trace.lines().count(), 101);
}

#[test]
fn repeats_multiply_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(cli(d, &["--repeats", "3", "--out", "b", "bench", "--k", "20", "--methods", "oracle,seed"]));
    let csv = fs::read_to_string(d.join("b/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(7).unwrap()).collect();
    assert_eq!(seeds[0..3], ["0", "1000003", "2000006"]);
}

#[test]
fn sweep_over_three_alphas_gives_three_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("sweep.json"),
        r#"{"K": [50], "M": [2], "N": [3], "alpha": [0.0005, 0.001, 0.005], "methods": ["oracle"], "repeats": 1}"#,
    )
    .unwrap();
    ok(cli(d, &["--out", "s", "bench", "--sweep", "sweep.json"]));
    let csv = fs::read_to_string(d.join("s/results.csv")).unwrap();
    let alphas: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(5).unwrap()).collect();
    assert_eq!(alphas, ["0.0005", "0.001", "0.005"]);
    ok(cli(d, &["replay", "s"]));
}

#[test]
fn mock_evolution_is_deterministic_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let args = |out: &'static str| ["--seed", "5", "--out", out, "evolve", "--llm", "mock", "--iters", "14", "--k", "40"];
    let a = ok(cli(d, &args("e1")));
    let b = ok(cli(d, &args("e2")));
    assert_eq!(digest_line(&a), digest_line(&b));

    let run = fs::read_dir(d.join("e1/runs")).unwrap().next().unwrap().unwrap().path();
    for f in ["history.json", "reflections.jsonl", "elitist.src", "candidates/000.src", "candidates/000.meta.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    assert_eq!(fs::read_dir(run.join("candidates")).unwrap().count(), 28);

    // record the exchanges, then answer from the transcript alone
    let rec = ok(cli(
        d,
        &["--seed", "5", "--out", "e3", "evolve", "--llm", "mock", "--iters", "14", "--k", "40", "--record", "t.jsonl"],
    ));
    let rep = ok(cli(
        d,
        &["--seed", "5", "--out", "e4", "evolve", "--llm", "replay", "--transcript", "t.jsonl", "--iters", "14", "--k", "40"],
    ));
    assert_eq!(digest_line(&rec), digest_line(&rep));
    assert_eq!(digest_line(&rec), digest_line(&a));
}

#[test]
fn live_backend_without_key_fails_before_any_call() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_contractlab"))
        .current_dir(tmp.path())
        .env_remove("CONTRACTLAB_CLI_TEST_KEY")
        .args(["evolve", "--llm", "live", "--api-key-env", "CONTRACTLAB_CLI_TEST_KEY", "--iters", "4", "--k", "10"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("CONTRACTLAB_CLI_TEST_KEY"), "{}", stderr(&o));
}

#[test]
fn bad_inputs_exit_nonzero_with_a_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("bad.json"),
        r#"{"m": 2, "n": 2, "q": [0, 1], "P": [[0.5, 0.5], [0.5, 0.4]], "c": [0, 0.1], "r_s": 0, "c_t": 0}"#,
    )
    .unwrap();
    let o = cli(d, &["optimize", "--scenario", "bad.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("row 1"), "{}", stderr(&o));

    let o = cli(d, &["bench", "--methods", "nonsense"]);
    assert!(!o.status.success());
    let o = cli(d, &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_solve_and_optimize_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(cli(d, &["--seed", "2", "--out", "g", "gen", "--m", "2", "--n", "3", "--k", "80"]));
    ok(cli(
        d,
        &["--out", "inferred.json", "seed-solve", "--scenario", "g/scenario.json", "--logs", "g/logs.jsonl", "--n-hat", "3"],
    ));
    let o = ok(cli(d, &["optimize", "--scenario", "inferred.json"]));
    let sol: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(sol["contract"].as_array().unwrap().len(), 2);
    let inferred: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("inferred.json")).unwrap()).unwrap();
    assert_eq!(inferred["m"], 2);
    assert!(inferred["n"].as_u64().unwrap() <= 3);
}

#[test]
fn bench_through_an_external_runner() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // a runner that answers every candidate with a canned reply
    fs::write(
        d.join("runner.sh"),
        "#!/bin/sh\n[ \"$1\" = --source ] && [ \"$3\" = --timeout ] || exit 2\ncat > /dev/null\ncat \"$RUNNER_REPLY\"\n",
    )
    .unwrap();
    fs::write(d.join("reply.json"), r#"{"error": {"kind": "crash", "detail": "ZeroDivisionError"}}"#).unwrap();
    // the runner is started from a scratch directory, so its path must be absolute
    let runner = d.join("runner.sh").display().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_contractlab"))
        .current_dir(d)
        .env("RUNNER_REPLY", d.join("reply.json"))
        .args([
            "--repeats", "1", "--out", "b", "bench", "--k", "20", "--methods", "zero-shot", "--sandbox", "/bin/sh",
            "--sandbox-arg", &runner, "--timeout", "5",
        ])
        .output()
        .unwrap();
    let o = ok(o);
    assert!(stdout(&o).contains("1 rows"));
    let csv = fs::read_to_string(d.join("b/results.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[8], "0");
    assert_eq!(row[13], "failed:crash");
}
