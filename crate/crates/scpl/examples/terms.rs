//! Terms, unification and act patterns: the building blocks of rules.
//!
//! Run with `cargo run --example terms`.

use scpl::parser::parse_term;
use scpl::term::{match_act, match_term, unify, ActPattern, Signer, Term};

fn t(src: &str) -> Term {
    parse_term(src).expect("valid term")
}

fn main() {
    let state = t("tourist(waiting(Host))");
    let live = t("tourist(waiting(nimrod))");
    println!("match {state} against {live}: {:?}", match_term(&state, &live).map(|s| s.to_string()));

    // Unification is symmetric and binds variables on both sides.
    let a = t("pay(X, 3)");
    let b = t("pay(bob, N)");
    println!("unify {a} with {b}: {}", unify(&a, &b).expect("unifiable"));
    println!("unify f(X, X) with f(a, b): {:?}", unify(&t("f(X, X)"), &t("f(a, b)")));

    // Lists use Prolog syntax; `[H|T]` splits the head off.
    let ballot = t("ballot(add(carol), [bob|Rest], 2)");
    let theta = match_term(&ballot, &t("ballot(add(carol), [bob, dana], 2)")).unwrap();
    println!("rest of the ballot: {}", theta.get("Rest").unwrap());

    // An act pattern names the signer, possibly with a variable.
    let pattern = ActPattern::new(Signer::Var("Tourist".into()), t("reserve(Self)"));
    let theta = match_act(&pattern, "udi", &t("reserve(Self)")).unwrap();
    println!("{pattern} heard from udi binds {theta}");
    println!("ground instance: {}", t("reserve(Host)").substitute(&theta.with("Host", t("nimrod"))));
}
