//! Statically checks a contract: desugaring, explicit nondeterminism with
//! unifier witnesses, and the brute-force cross-check over ground instances.
//!
//! Run with `cargo run --example static_check [file.scpl]`.

use std::path::PathBuf;

use scpl::manifest::load_program;
use scpl::staticcheck::{brute_force_nd, default_universe};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus/violations.scpl"));
    let program = load_program(&path)?;
    println!("{} rules after desugaring:", program.rules().len());
    for rule in program.rules() {
        println!("  {rule}");
    }
    let file = path.display().to_string();
    if program.is_clean() {
        println!("no violations");
    }
    for d in &program.diagnostics {
        println!("{}", d.render(&file));
        if let Some(w) = &d.witness {
            println!("    both rules apply under {}, leading to {} and {}", w.theta, w.post1, w.post2);
        }
    }

    // Independent check: instantiate every rule over a small universe of
    // constants and compare ground instances pairwise.
    let universe = default_universe(program.rules());
    let pairs = brute_force_nd(program.rules(), &universe, 5_000_000)?;
    let shown: Vec<String> = universe.iter().map(|t| t.to_string()).collect();
    println!("brute force over {{{}}}: {} overlapping rule pairs", shown.join(", "), pairs.len());
    Ok(())
}
