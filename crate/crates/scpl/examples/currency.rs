//! A seeded random run of the endowment currency, tracking every member's
//! balance as derived from the shared act history.
//!
//! Run with `cargo run --example currency [seed]`.

use std::path::Path;

use scpl::manifest::load_program;
use scpl::oracle::RandomOracle;
use scpl::runtime::{Outcome, Runtime};
use scpl::scheduler::{Fair, RandomScheduler};
use scpl::trace::HaltReason;
use scpl::verifier::{ledger_of, program_constants, verify_trace, CurrencyModel, SignedAct};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(7), |s| s.parse())?;
    let program = load_program(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/endowment.scpl"))?;
    let model = CurrencyModel::detect(&program.program).ok_or("not a currency contract")?;
    println!("currency role `{}`, initial balance {}", model.role, model.initial);

    let mut rt = Runtime::new(program.clone())?;
    let mut oracle = RandomOracle::new(seed, program_constants(&program));
    let mut scheduler = Fair::new(RandomScheduler::new(seed), 16);
    for _ in 0..120 {
        match rt.step(&mut scheduler, &mut oracle)? {
            // Print on acts and decisions; receipts change no balance.
            Some(Outcome::Emitted(_) | Outcome::Consulted(_)) => {}
            Some(_) => continue,
            None => break,
        }
        // Balances from the global sequence of acts, in flight or not.
        let global: Vec<SignedAct> = rt.config().acts.iter().map(|a| SignedAct::from(&**a)).collect();
        let balances: Vec<String> =
            rt.config().agents.keys().map(|u| format!("{u}={}", model.balance(&global, u))).collect();
        if let Some(last) = rt.trace().text_lines().last() {
            println!("{last:40} {}", balances.join(" "));
        }
    }

    // Each member's own history explains its state.
    let ledger = ledger_of(rt.config());
    for (name, cell) in &rt.config().agents {
        println!("{name}: state {}, balance from own history {}", cell.state, model.balance(&ledger[name], name));
    }
    rt.halt(HaltReason::MaxSteps, None);
    let report = verify_trace(program, rt.trace());
    print!("{}", report.to_text());
    Ok(())
}
