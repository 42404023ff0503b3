//! The `scpl` command line: `check`, `run`, `verify` and `serve`.
//!
//! Exit codes: 0 success; 1 the contract has violations, is not runnable, or
//! the trace fails verification; 2 usage, I/O or syntax errors (and a busy
//! port); 3 a contract fault during a run.

use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::gateway::{Gateway, GatewayError, ServeConfig};
use crate::manifest::{self, load_program, OracleSpec, RunManifest, SchedulerSpec};
use crate::runtime::Runtime;
use crate::staticcheck::CheckedProgram;
use crate::trace::{HaltReason, Trace};
use crate::verifier::verify_trace;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FAULT: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "scpl", version, about = "Check, run, verify and serve social contracts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and statically check a contract.
    Check {
        file: PathBuf,
        /// Print diagnostics as a JSON array on standard output.
        #[arg(long)]
        json: bool,
    },
    /// Run a contract to quiescence or the step limit and print its trace.
    Run {
        /// A `.scpl` contract, or a JSON run manifest naming one.
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Do not print the trace on standard output.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Check a JSON-lines trace against the contract that produced it.
    Verify {
        contract: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Serve a run over HTTP/WebSocket so humans can operate agents.
    Serve {
        /// A `.scpl` contract, or a JSON run manifest naming one.
        file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Shared secret sessions present when claiming an agent.
        #[arg(long)]
        token: Option<String>,
        /// Comma-separated agents operated from sessions.
        #[arg(long, value_delimiter = ',')]
        interactive: Vec<String>,
        /// Directory of console assets to serve.
        #[arg(long)]
        assets: Option<PathBuf>,
        /// Seconds before an unanswered decision request counts as a pass.
        #[arg(long, default_value_t = 300)]
        idle_timeout: u64,
        /// Milliseconds to pause after each transition.
        #[arg(long, default_value_t = 0)]
        step_delay: u64,
        /// Stop serving once no agent can move any more.
        #[arg(long)]
        exit_on_halt: bool,
    },
}

/// Run options shared by `run` and `serve`. Given flags override a manifest.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// `none` (humans pass), `random`, or a JSON decision script.
    #[arg(long)]
    pub oracle: Option<String>,
    #[arg(long, value_enum)]
    pub scheduler: Option<SchedulerSpec>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bound on how long an enabled agent may be passed over.
    #[arg(long)]
    pub fair: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Where to write the trace (text; JSON lines go beside it).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

impl RunArgs {
    /// The manifest for `file`: read from it if it is JSON, otherwise built
    /// around it as the contract; then overridden by the given flags.
    pub fn manifest(&self, file: &Path) -> Result<RunManifest, manifest::ManifestError> {
        let mut m = if file.extension().is_some_and(|e| e == "json") {
            let mut m = RunManifest::from_json(&manifest::read(file)?)?;
            // Paths in a manifest are relative to it.
            let base = file.parent().unwrap_or(Path::new(""));
            m.contract = base.join(&m.contract);
            if let OracleSpec::Script(p) = &mut m.oracle {
                *p = base.join(&*p);
            }
            m.trace = m.trace.map(|t| base.join(t));
            m
        } else {
            RunManifest::new(file)
        };
        if let Some(o) = &self.oracle {
            m.oracle = match o.as_str() {
                "none" => OracleSpec::None,
                "random" => OracleSpec::Random,
                path => OracleSpec::Script(path.into()),
            };
        }
        if let Some(s) = self.scheduler {
            m.scheduler = s;
        }
        if let Some(s) = self.seed {
            m.seed = s;
        }
        if self.fair.is_some() {
            m.fair = self.fair;
        }
        if let Some(k) = self.max_steps {
            m.max_steps = k;
        }
        if self.trace.is_some() {
            m.trace = self.trace.clone();
        }
        Ok(m)
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(execute(cli.command))
}

pub fn execute(command: Command) -> u8 {
    match command {
        Command::Check { file, json } => check(&file, json),
        Command::Run { file, run, quiet } => run_cmd(&file, &run, quiet),
        Command::Verify { contract, trace, json } => verify(&contract, &trace, json),
        Command::Serve { file, run, port, host, token, interactive, assets, idle_timeout, step_delay, exit_on_halt } => {
            let opts = ServeOpts {
                addr: SocketAddr::new(host, port),
                token,
                interactive,
                assets,
                idle_timeout: Duration::from_secs(idle_timeout),
                step_delay: Duration::from_millis(step_delay),
                exit_on_halt,
            };
            serve(&file, &run, opts)
        }
    }
}

fn load(path: &Path) -> Result<Arc<CheckedProgram>, u8> {
    load_program(path).map_err(|e| {
        eprintln!("{e}");
        EXIT_USAGE
    })
}

fn check(file: &Path, json: bool) -> u8 {
    let program = match load(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let name = file.display().to_string();
    if json {
        let diags: Vec<_> = program.diagnostics.iter().map(|d| d.to_json(&name)).collect();
        println!("{}", serde_json::Value::Array(diags));
    }
    for d in &program.diagnostics {
        eprintln!("{}", d.render(&name));
    }
    if program.is_clean() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn prepare(file: &Path, run: &RunArgs) -> Result<(RunManifest, Arc<CheckedProgram>), u8> {
    let m = run.manifest(file).map_err(|e| {
        eprintln!("{e}");
        EXIT_USAGE
    })?;
    let program = load(&m.contract)?;
    if !program.is_runnable() {
        let name = m.contract.display().to_string();
        for d in &program.diagnostics {
            eprintln!("{}", d.render(&name));
        }
        eprintln!("{name}: not runnable");
        return Err(EXIT_FAILED);
    }
    Ok((m, program))
}

fn save_trace(trace: &Trace, path: Option<&Path>) -> Result<(), u8> {
    if let Some(path) = path {
        manifest::write_trace(trace, path).map_err(|e| {
            eprintln!("cannot write trace to {}: {e}", path.display());
            EXIT_USAGE
        })?;
    }
    Ok(())
}

fn run_cmd(file: &Path, args: &RunArgs, quiet: bool) -> u8 {
    let (m, program) = match prepare(file, args) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let mut oracle = match m.oracle(&program) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    let mut scheduler = m.scheduler();
    let mut rt = match Runtime::new(program) {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("{e}");
            return if e.is_contract_fault() { EXIT_FAULT } else { EXIT_FAILED };
        }
    };
    let result = rt.run(&mut scheduler, &mut oracle, m.max_steps);
    let trace = rt.into_trace();
    if !quiet {
        print!("{}", trace.to_text());
        let _ = std::io::stdout().flush();
    }
    if let Err(code) = save_trace(&trace, m.trace.as_deref()) {
        return code;
    }
    match result {
        Ok(reason) => {
            eprintln!("halted: {}", halt_name(reason));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("fault: {e}");
            if e.is_contract_fault() {
                EXIT_FAULT
            } else {
                EXIT_FAILED
            }
        }
    }
}

fn halt_name(reason: HaltReason) -> &'static str {
    match reason {
        HaltReason::Quiescent => "quiescent",
        HaltReason::MaxSteps => "step limit reached",
        HaltReason::AwaitingOracle => "awaiting oracle",
        HaltReason::Fault => "fault",
    }
}

fn verify(contract: &Path, trace_path: &Path, json: bool) -> u8 {
    let program = match load(contract) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let src = match std::fs::read_to_string(trace_path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot read {}: {e}", trace_path.display());
            return EXIT_USAGE;
        }
    };
    let trace = match Trace::from_jsonl(&src) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", trace_path.display());
            return EXIT_FAILED;
        }
    };
    let report = verify_trace(program, &trace);
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub struct ServeOpts {
    pub addr: SocketAddr,
    pub token: Option<String>,
    pub interactive: Vec<String>,
    pub assets: Option<PathBuf>,
    pub idle_timeout: Duration,
    pub step_delay: Duration,
    pub exit_on_halt: bool,
}

fn serve(file: &Path, args: &RunArgs, opts: ServeOpts) -> u8 {
    let (mut m, program) = match prepare(file, args) {
        Ok(x) => x,
        Err(code) => return code,
    };
    if !opts.interactive.is_empty() {
        m.interactive = opts.interactive.clone();
    }
    if opts.token.is_some() {
        m.token = opts.token.clone();
    }
    if let Err(e) = m.check_agents(&program) {
        eprintln!("{e}");
        return EXIT_USAGE;
    }
    let fallback = match m.oracle(&program) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
    };
    let contract_name = m.contract.file_stem().map_or_else(|| "contract".to_string(), |s| s.to_string_lossy().into_owned());
    let config = ServeConfig {
        program,
        contract_name,
        interactive: m.interactive.iter().map(|a| a.as_str().into()).collect::<BTreeSet<_>>(),
        fallback,
        scheduler: m.scheduler(),
        token: m.token.clone().unwrap_or_default(),
        max_steps: m.max_steps,
        idle_timeout: opts.idle_timeout,
        step_delay: opts.step_delay,
        assets: opts.assets.clone(),
    };
    let tokio = match tokio::runtime::Runtime::new() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot start the async runtime: {e}");
            return EXIT_USAGE;
        }
    };
    let outcome = tokio.block_on(async {
        let gateway = Gateway::start(config, opts.addr).await?;
        eprintln!("serving on http://{}", gateway.local_addr());
        if opts.exit_on_halt {
            tokio::select! {
                _ = gateway.halted() => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        } else {
            let _ = tokio::signal::ctrl_c().await;
        }
        gateway.shutdown().await
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e @ GatewayError::Bind { .. }) => {
            eprintln!("{e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("{e}");
            return EXIT_FAILED;
        }
    };
    if let Err(code) = save_trace(&outcome.trace, m.trace.as_deref()) {
        return code;
    }
    eprintln!("stream audit: {}", if outcome.audit_ok { "events match the trace" } else { "MISMATCH" });
    match (&outcome.fault, outcome.audit_ok) {
        (Some(e), _) => {
            eprintln!("fault: {e}");
            if e.is_contract_fault() {
                EXIT_FAULT
            } else {
                EXIT_FAILED
            }
        }
        (None, false) => EXIT_FAILED,
        (None, true) => EXIT_OK,
    }
}
