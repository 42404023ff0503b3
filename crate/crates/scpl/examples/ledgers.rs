//! Histories and ledgers: restriction to one signer, soundness (everyone's
//! record of v's acts is a prefix of v's own) and consistency.
//!
//! Run with `cargo run --example ledgers`.

use scpl::parser::parse_term;
use scpl::verifier::{check_consistent, check_sound, diagonal, restrict, Ledger, SignedAct};

fn act(signer: &str, payload: &str) -> SignedAct {
    SignedAct::new(signer, parse_term(payload).unwrap())
}

fn show(h: &[SignedAct]) -> String {
    h.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

fn main() {
    let u = vec![act("u", "pay(v)"), act("v", "pay(u)"), act("u", "pay(w)")];
    let v = vec![act("u", "pay(v)"), act("v", "pay(u)")];
    let w = vec![act("v", "pay(u)")];
    let ledger: Ledger = [("u".into(), u.clone()), ("v".into(), v.clone()), ("w".into(), w.clone())].into();

    println!("u's own acts: {}", show(&restrict(&u, "u")));
    for (agent, h) in diagonal(&ledger) {
        println!("diagonal {agent}: [{}]", show(&h));
    }
    println!("sound: {:?}", check_sound(&ledger));
    println!("u and v consistent: {}", check_consistent(&u, &v));
    println!("v and w consistent: {}", check_consistent(&v, &w));

    // w claims to have seen an act of u that u never made.
    let mut forged = ledger.clone();
    forged.get_mut("w").unwrap().push(act("u", "pay(w)"));
    forged.get_mut("w").unwrap().insert(0, act("u", "pay(x)"));
    println!("with a forged record: {:?}", check_sound(&forged));
}
