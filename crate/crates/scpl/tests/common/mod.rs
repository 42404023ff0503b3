#![allow(dead_code)]

use std::sync::Arc;

use scpl::oracle::RandomOracle;
use scpl::parser::parse_program;
use scpl::runtime::{Outcome, Runtime, RuntimeError};
use scpl::scheduler::{Fair, RandomScheduler};
use scpl::staticcheck::{check, CheckedProgram};
use scpl::trace::HaltReason;
use scpl::verifier::{self, check_consistent, check_sound, check_store_invariant, ledger_consistent, ledger_of, replay_state};

/// The runnable corpus contracts.
pub const CONTRACTS: [&str; 7] =
    ["tourists_hosts", "endowment", "egalitarian", "brokered", "citizens_band", "managed_group", "democratic_group"];

pub fn corpus_path(file: &str) -> String {
    format!("{}/corpus/{file}", env!("CARGO_MANIFEST_DIR"))
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(corpus_path(&format!("{name}.scpl"))).expect("corpus file")
}

pub fn checked(name: &str) -> Arc<CheckedProgram> {
    Arc::new(check(parse_program(&source(name)).expect("corpus parses")))
}

pub fn random_oracle(program: &CheckedProgram, seed: u64) -> RandomOracle {
    RandomOracle::new(seed, verifier::program_constants(program)).with_pass_probability(0.05)
}

/// A seeded random run, calling `observe` after every transition.
pub fn random_run(
    program: Arc<CheckedProgram>,
    seed: u64,
    max_steps: usize,
    mut observe: impl FnMut(&Runtime),
) -> Result<Runtime, RuntimeError> {
    let mut oracle = random_oracle(&program, seed);
    let mut scheduler = Fair::new(RandomScheduler::new(seed), 16);
    let mut rt = Runtime::new(program)?;
    let mut steps = 0;
    let reason = loop {
        if steps >= max_steps {
            break HaltReason::MaxSteps;
        }
        match rt.step(&mut scheduler, &mut oracle) {
            Ok(None) => break HaltReason::Quiescent,
            Ok(Some(o)) => {
                if o.is_transition() {
                    steps += 1;
                    observe(&rt);
                }
                if matches!(o, Outcome::Passed) && steps % 7 == 0 {
                    // Idle humans reconsider now and then.
                    let names: Vec<_> = rt.config().agents.keys().cloned().collect();
                    names.iter().for_each(|n| rt.wake(n));
                }
            }
            Err(e) => {
                rt.halt(HaltReason::Fault, Some(e.to_string()));
                return Err(e);
            }
        }
    };
    rt.halt(reason, None);
    Ok(rt)
}

/// Violations of the per-transition ledger properties in one configuration.
#[derive(Default, Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tally {
    pub transitions: usize,
    pub unsound: usize,
    pub inconsistent: usize,
    pub store: usize,
}

impl Tally {
    pub fn observe(&mut self, rt: &Runtime) {
        self.transitions += 1;
        let ledger = ledger_of(rt.config());
        if check_sound(&ledger).is_err() {
            self.unsound += 1;
        }
        // Linear-time equivalent of checking every pair with `check_consistent`.
        if !ledger_consistent(&ledger) {
            self.inconsistent += 1;
        }
        if check_store_invariant(rt.config()).is_err() {
            self.store += 1;
        }
    }
}

/// Agents whose replayed history disagrees with their live state.
pub fn replay_divergences(rt: &Runtime) -> Vec<String> {
    let ledger = ledger_of(rt.config());
    rt.config()
        .agents
        .values()
        .filter_map(|cell| match replay_state(&ledger[&cell.name], rt.program(), &cell.name, &cell.initial) {
            Ok(s) if s == cell.state => None,
            Ok(s) => Some(format!("{}: replay {s}, live {}", cell.name, cell.state)),
            Err(e) => Some(format!("{}: {e}", cell.name)),
        })
        .collect()
}

/// Pairs of histories in the final ledger that `check_consistent` rejects.
pub fn inconsistent_pairs(rt: &Runtime) -> usize {
    let ledger = ledger_of(rt.config());
    let hs: Vec<_> = ledger.values().collect();
    let mut n = 0;
    for (i, a) in hs.iter().enumerate() {
        n += hs[i + 1..].iter().filter(|b| !check_consistent(a, b)).count();
    }
    n
}
pub mod democratic;
pub mod contracts;
