//! Client for the external solver runner.
//!
//! Each evaluation spawns `<runner> --source <file> --timeout <sec>`, writes
//! one JSON request line to its stdin and reads one JSON response from its
//! stdout. Exit code 0 means a structured response was written (success or
//! error); 2 means the runner rejected its invocation or input.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use contractlab_core::evolution::protocol::{FailureKind, RunFailure, SandboxRequest, SandboxResponse};
use contractlab_core::evolution::SolverRunner;

/// Exit code for a usage or protocol error reported by the runner.
pub const EXIT_PROTOCOL: i32 = 2;

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    /// Runner executable, e.g. `sandbox-runner`.
    pub program: PathBuf,
    /// Arguments placed before `--source` (e.g. a script path for an
    /// interpreter).
    pub prefix_args: Vec<String>,
    pub timeout_secs: u64,
    /// Extra time granted to the runner to report its own timeout before the
    /// process is killed from this side.
    pub grace: Duration,
}

impl SandboxConfig {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            prefix_args: Vec::new(),
            timeout_secs: 30,
            grace: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubprocessSandbox {
    pub config: SandboxConfig,
}

impl SubprocessSandbox {
    pub fn new(config: SandboxConfig) -> Self {
        Self { config }
    }

    fn run_inner(&self, source: &str, request: &SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure> {
        let dir = tempfile::tempdir_in(std::env::temp_dir())
            .map_err(|e| RunFailure::new(FailureKind::Unavailable, format!("temp dir: {e}")))?;
        let src_path = dir.path().join("candidate.py");
        std::fs::write(&src_path, source)
            .map_err(|e| RunFailure::new(FailureKind::Unavailable, format!("writing source: {e}")))?;
        let mut payload = serde_json::to_vec(request).expect("request serialises");
        payload.push(b'\n');

        let mut child = Command::new(&self.config.program)
            .args(&self.config.prefix_args)
            .arg("--source")
            .arg(&src_path)
            .arg("--timeout")
            .arg(self.config.timeout_secs.to_string())
            .current_dir(dir.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                RunFailure::new(
                    FailureKind::Unavailable,
                    format!("cannot start {}: {e}", self.config.program.display()),
                )
            })?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // a runner that exits early closes the pipe; that is reported
            // through its exit status instead
            let _ = stdin.write_all(&payload);
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let deadline = Instant::now() + Duration::from_secs(self.config.timeout_secs) + self.config.grace;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(RunFailure::new(
                        FailureKind::Timeout,
                        format!("runner killed after {} s", self.config.timeout_secs),
                    ));
                }
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(RunFailure::new(FailureKind::Crash, format!("waiting for runner: {e}"))),
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        let err_head: String = String::from_utf8_lossy(&err).chars().take(500).collect();

        match status.code() {
            Some(0) => {
                let text = String::from_utf8_lossy(&out);
                let response: SandboxResponse = serde_json::from_str(text.trim()).map_err(|e| {
                    RunFailure::new(FailureKind::Malformed, format!("unparseable runner response: {e}"))
                })?;
                response.into_result()
            }
            Some(EXIT_PROTOCOL) => Err(RunFailure::new(
                FailureKind::Malformed,
                format!("runner reported a protocol error: {err_head}"),
            )),
            code => Err(RunFailure::new(
                FailureKind::Crash,
                format!("runner exited with {code:?}: {err_head}"),
            )),
        }
    }
}

impl SolverRunner for SubprocessSandbox {
    fn run(&mut self, source: &str, request: &SandboxRequest) -> Result<Vec<Vec<f64>>, RunFailure> {
        self.run_inner(source, request)
    }
}
