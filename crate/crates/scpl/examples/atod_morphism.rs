//! From an explicit social contract to a program and back: compile the
//! two-agent hello contract, explore the program exhaustively, and check that
//! it implements the contract as a strict morphism.
//!
//! Run with `cargo run --example atod_morphism`.

use std::sync::Arc;

use scpl::parser::parse_term;
use scpl::verifier::{atod_compile, check_implementation, explore, restrict, InputMode, SocialContract};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Each agent may greet once, and takes the other's greeting in after its own.
    let sc = SocialContract::generate(
        &["a", "b"],
        |_, h| if h.is_empty() { vec![parse_term("hello").unwrap()] } else { vec![] },
        |v, h, _| !restrict(h, v).is_empty(),
        50,
    )
    .ok_or("the contract is not finite")?;
    println!("contract: {} transitions over {} ledgers", sc.transitions.len(), sc.transition_system().states.len());

    let program = Arc::new(atod_compile(&sc)?);
    println!("compiled program:");
    for rule in program.rules() {
        println!("  {rule}");
    }

    let exploration = explore(program, InputMode::RuleDefined, 10_000)?;
    println!("program: {} configurations", exploration.ts.states.len());
    match check_implementation(&exploration.ts, &sc.transition_system(), &exploration.states_only, true) {
        Ok(()) => println!("the program implements the contract (strict morphism)"),
        Err(e) => println!("not an implementation: {e:?}"),
    }
    Ok(())
}
