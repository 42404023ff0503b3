//! The democratic group: proposals circulate as ballots and are applied only
//! with a positive tally. The humans here are a small hand-written oracle:
//! alice proposes two newcomers, and every member votes from a fixed table.
//!
//! Run with `cargo run --example democratic_group`.

use std::path::Path;

use scpl::manifest::load_program;
use scpl::oracle::{Oracle, OracleAnswer, OracleDecision, OracleError, OracleRequest};
use scpl::runtime::Runtime;
use scpl::scheduler::Canonical;
use scpl::term::{Subst, Term};

/// Decides for every human in the group.
struct Members {
    proposals: Vec<&'static str>,
    /// Whether a ballot is still circulating.
    open: bool,
}

impl Members {
    /// +1, 0 or -1: bob dislikes carol, everybody else is in favour.
    fn vote(voter: &str, proposal: &Term) -> usize {
        match (voter, proposal.to_string().as_str()) {
            ("bob", "add(carol)") => 2,
            _ => 1,
        }
    }
}

fn decide(alternative: usize, bindings: Subst) -> Result<OracleAnswer, OracleError> {
    Ok(OracleAnswer::Decide(OracleDecision { alternative, bindings }))
}

impl Oracle for Members {
    fn decide(&mut self, req: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        if req.state.as_name() == Some("founder") {
            return decide(0, Subst::new());
        }
        for (i, alt) in req.alternatives.iter().enumerate() {
            match alt.act.functor() {
                // Holding the ballot: the choice options are R, R+1 and R-1.
                Some(("ballot", 3)) => {
                    let (var, options) = &alt.choices[0];
                    let vote = Self::vote(&req.agent, &alt.act.args()[0]);
                    if alt.act.args()[1].as_list().is_some_and(|rest| rest.is_empty()) {
                        self.open = false;
                    }
                    return decide(i, [(var.clone(), options[vote].clone())].into_iter().collect());
                }
                Some(("propose", 1)) if &*req.agent == "alice" && !self.open && !self.proposals.is_empty() => {
                    self.open = true;
                    let p = scpl::parser::parse_term(self.proposals.remove(0)).unwrap();
                    return decide(i, [(alt.required[0].clone(), p)].into_iter().collect());
                }
                _ => {}
            }
        }
        Ok(OracleAnswer::Pass)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let program = load_program(&Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus/democratic_group.scpl"))?;
    let mut rt = Runtime::new(program)?;
    let mut members = Members { proposals: vec!["add(bob)", "add(carol)"], open: false };
    // Passing humans idle until something changes; wake them so the
    // founder gets to make the next proposal once a ballot closes.
    for _ in 0..200 {
        if rt.step(&mut Canonical, &mut members)?.is_none() {
            if members.proposals.is_empty() || members.open {
                break;
            }
            let names: Vec<_> = rt.config().agents.keys().cloned().collect();
            names.iter().for_each(|n| rt.wake(n));
        }
    }
    print!("{}", rt.trace().to_text());
    for (name, cell) in &rt.config().agents {
        println!("{name:12} {}", cell.state);
    }
    Ok(())
}
