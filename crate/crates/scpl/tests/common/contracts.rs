//! Small explicit social contracts.

use scpl::decimal::Decimal;
use scpl::parser::parse_term;
use scpl::term::Term;
use scpl::verifier::{balance_of, restrict, SignedAct, SocialContract};

const LIMIT: usize = 50;

fn term(s: &str) -> Term {
    parse_term(s).unwrap()
}

/// Each of two agents may say `hello` once, but only before hearing the
/// other's; the other's greeting is taken in after one's own.
pub fn hello_minimal() -> SocialContract {
    SocialContract::generate(
        &["a", "b"],
        |_, h| if h.is_empty() { vec![term("hello")] } else { vec![] },
        |v, h, _| !restrict(h, v).is_empty(),
        LIMIT,
    )
    .unwrap()
}

/// Each of two agents may say `hello` once, at any time, and hears the other
/// at any time.
pub fn hello() -> SocialContract {
    SocialContract::generate(&["a", "b"], |v, h| if restrict(h, v).is_empty() { vec![term("hello")] } else { vec![] }, |_, _, _| true, LIMIT)
        .unwrap()
}

/// `a` broadcasts one `hi` to `b` and `c`.
pub fn single_broadcast() -> SocialContract {
    SocialContract::generate(&["a", "b", "c"], |v, h| if v == "a" && h.is_empty() { vec![term("hi")] } else { vec![] }, |_, _, _| true, LIMIT)
        .unwrap()
}

/// The formal currency community: every agent starts with `c` coins and may
/// pay one coin to another agent while its balance is positive. Histories
/// are capped at `cap` acts to keep the system finite.
pub fn currency(c: i64, cap: usize) -> SocialContract {
    let agents = ["u", "v"];
    SocialContract::generate(
        &agents,
        |x, h| {
            if h.len() >= cap || balance_of(h, x, &Decimal::from(c)) <= Decimal::from(0) {
                return vec![];
            }
            agents.iter().filter(|y| **y != x).map(|y| term(&format!("pay({y})"))).collect()
        },
        move |_, h: &[SignedAct], _| h.len() < cap,
        LIMIT,
    )
    .unwrap()
}
