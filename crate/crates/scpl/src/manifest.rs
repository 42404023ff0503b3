//! What a run needs besides the contract: who decides for the humans, how
//! transitions are scheduled, and where the trace goes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::oracle::{NoOracle, Oracle, OracleError, RandomOracle, ScriptedOracle};
use crate::scheduler::{Canonical, Fair, RandomScheduler, Scheduler};
use crate::staticcheck::CheckedProgram;
use crate::term::Term;
use crate::trace::Trace;
use crate::verifier;

#[derive(Clone, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSpec {
    /// Every human passes.
    #[default]
    None,
    /// Seeded random decisions.
    Random,
    /// Per-agent decision lists from a JSON file.
    Script(PathBuf),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerSpec {
    #[default]
    Canonical,
    Random,
}

fn default_max_steps() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct RunManifest {
    pub contract: PathBuf,
    #[serde(default)]
    pub oracle: OracleSpec,
    /// Agents whose decisions come from connected sessions.
    #[serde(default)]
    pub interactive: Vec<String>,
    #[serde(default)]
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub seed: u64,
    /// Wrap the scheduler so no enabled agent waits more than this many steps.
    #[serde(default)]
    pub fair: Option<usize>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    /// Shared secret sessions present when claiming agents.
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Oracle(#[from] OracleError),
    #[error("interactive agent `{0}` is neither activated nor spawnable")]
    UnknownAgent(String),
    #[error("bad manifest: {0}")]
    Malformed(#[from] serde_json::Error),
}

impl RunManifest {
    pub fn new(contract: impl Into<PathBuf>) -> Self {
        RunManifest {
            contract: contract.into(),
            oracle: OracleSpec::None,
            interactive: Vec::new(),
            scheduler: SchedulerSpec::Canonical,
            seed: 0,
            fair: None,
            max_steps: default_max_steps(),
            trace: None,
            token: None,
        }
    }

    pub fn from_json(src: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(src)?)
    }

    pub fn scheduler(&self) -> Box<dyn Scheduler + Send> {
        let inner: Box<dyn Scheduler + Send> = match self.scheduler {
            SchedulerSpec::Canonical => Box::new(Canonical),
            SchedulerSpec::Random => Box::new(RandomScheduler::new(self.seed)),
        };
        match self.fair {
            Some(bound) => Box::new(Fair::new(inner, bound)),
            None => inner,
        }
    }

    /// The oracle for agents that are not served interactively.
    pub fn oracle(&self, program: &CheckedProgram) -> Result<Box<dyn Oracle + Send>, ManifestError> {
        Ok(match &self.oracle {
            OracleSpec::None => Box::new(NoOracle),
            OracleSpec::Random => Box::new(RandomOracle::new(self.seed, verifier::program_constants(program))),
            OracleSpec::Script(path) => Box::new(ScriptedOracle::from_json(&read(path)?)?),
        })
    }

    /// Interactive agents must be activated, or spawnable under some name.
    pub fn check_agents(&self, program: &CheckedProgram) -> Result<(), ManifestError> {
        let activated: BTreeSet<&str> = program.program.activation.iter().map(|a| &*a.agent).collect();
        let mut spawnable_names = BTreeSet::new();
        let mut any_name = false;
        for rule in program.rules() {
            match rule.spawn.as_ref().and_then(|s| s.agent.as_ref()) {
                Some(Term::Name(n)) => {
                    spawnable_names.insert(n.to_string());
                }
                Some(_) => any_name = true,
                None => {}
            }
        }
        for agent in &self.interactive {
            if !activated.contains(agent.as_str()) && !spawnable_names.contains(agent) && !any_name {
                return Err(ManifestError::UnknownAgent(agent.clone()));
            }
        }
        Ok(())
    }
}

pub fn read(path: &Path) -> Result<String, ManifestError> {
    std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })
}

/// Writes the text form to `path` and the JSON-lines form next to it (same
/// name, `.jsonl` extension; a `.jsonl` path puts the text form in `.txt`).
pub fn write_trace(trace: &Trace, path: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    let (text, jsonl) = if path.extension().is_some_and(|e| e == "jsonl") {
        (path.with_extension("txt"), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.with_extension("jsonl"))
    };
    std::fs::write(&text, trace.to_text())?;
    std::fs::write(&jsonl, trace.to_jsonl())?;
    Ok((text, jsonl))
}

/// Loads and checks a contract.
pub fn load_program(path: &Path) -> Result<Arc<CheckedProgram>, LoadError> {
    let src = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })?;
    let program = crate::parser::parse_program(&src).map_err(|e| LoadError::Parse { path: path.to_path_buf(), source: e })?;
    Ok(Arc::new(crate::staticcheck::check(program)))
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}", path = .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{source}", path = .path.display())]
    Parse { path: PathBuf, source: crate::parser::ParseError },
}
