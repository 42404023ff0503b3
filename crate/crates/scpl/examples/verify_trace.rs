//! Writes a trace, verifies it, then shows what the verifier reports when a
//! line is deleted or two acts of one signer are swapped.
//!
//! Run with `cargo run --example verify_trace`.

use std::path::Path;

use scpl::manifest::load_program;
use scpl::oracle::ScriptedOracle;
use scpl::runtime::Runtime;
use scpl::scheduler::Canonical;
use scpl::trace::Trace;
use scpl::verifier::verify_trace;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let program = load_program(&corpus.join("tourists_hosts.scpl"))?;
    let mut oracle = ScriptedOracle::from_json(&std::fs::read_to_string(corpus.join("tourists_hosts.script.json"))?)?;
    let mut rt = Runtime::new(program.clone())?;
    rt.run(&mut Canonical, &mut oracle, 1000)?;
    let jsonl = rt.trace().to_jsonl();
    println!("{jsonl}");

    let check = |label: &str, text: &str| match Trace::from_jsonl(text) {
        Ok(trace) => {
            let report = verify_trace(program.clone(), &trace);
            println!("--- {label}: {}", if report.passed() { "passes" } else { "fails" });
            for c in report.checks.iter().filter(|c| !c.passed) {
                println!("    {} at {:?}: {}", c.name, c.position, c.detail);
            }
        }
        Err(e) => println!("--- {label}: unreadable: {e}"),
    };
    check("as written", &jsonl);

    let lines: Vec<&str> = jsonl.lines().collect();
    let mut deleted = lines.clone();
    deleted.remove(3);
    check("line 4 deleted", &(deleted.join("\n") + "\n"));

    let nimrod: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].contains(r#""kind":"act""#) && lines[i].contains(r#""agent":"nimrod""#)).collect();
    let mut swapped = lines.clone();
    swapped.swap(nimrod[0], nimrod[1]);
    check("nimrod's two acts swapped", &(swapped.join("\n") + "\n"));
    Ok(())
}
