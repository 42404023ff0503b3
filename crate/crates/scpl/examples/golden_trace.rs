//! Runs the tourists-and-hosts contract with scripted humans, prints the
//! canonical trace, then searches for the schedule that produces the
//! reference interleaving and replays it.
//!
//! Run with `cargo run --example golden_trace`.

use std::path::Path;

use scpl::manifest::load_program;
use scpl::oracle::ScriptedOracle;
use scpl::runtime::{find_schedule, Runtime};
use scpl::scheduler::{Canonical, Replay};
use scpl::verifier::verify_trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let program = load_program(&corpus.join("tourists_hosts.scpl"))?;
    let script = || ScriptedOracle::from_json(&std::fs::read_to_string(corpus.join("tourists_hosts.script.json")).unwrap());

    let mut rt = Runtime::new(program.clone())?;
    let halt = rt.run(&mut Canonical, &mut script()?, 1000)?;
    println!("canonical schedule ({halt:?}):\n{}", rt.trace().to_text());

    let reference = std::fs::read_to_string(corpus.join("tourists_hosts.golden.txt"))?;
    let goal: Vec<String> = reference.lines().map(String::from).collect();
    let start = Runtime::new(program.clone())?;
    let schedule = find_schedule(&start, &script()?, &goal, 200_000).ok_or("not reachable")?;
    let mut replayed = start.clone();
    replayed.run(&mut Replay::new(schedule.clone()), &mut script()?, 1000)?;
    println!("reference interleaving, found in {} moves:\n{}", schedule.len(), replayed.trace().to_text());
    assert_eq!(replayed.trace().to_text(), reference);

    let report = verify_trace(program, replayed.trace());
    println!("verification: {}", if report.passed() { "all checks pass" } else { "FAILED" });
    for (name, cell) in &replayed.config().agents {
        println!("  {name:8} {}", cell.state);
    }
    Ok(())
}
