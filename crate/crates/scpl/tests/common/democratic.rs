//! A driver for the democratic group: the founder puts proposals forward one
//! at a time, and every member votes from a seeded table.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scpl::oracle::{Oracle, OracleAnswer, OracleDecision, OracleError, OracleRequest};
use scpl::runtime::{Runtime, RuntimeError};
use scpl::scheduler::RandomScheduler;
use scpl::staticcheck::CheckedProgram;
use scpl::term::{Subst, Sym, Term};
use scpl::trace::{HaltReason, TraceEvent};

pub const FOUNDER: &str = "alice";

/// Per (proposal number, member): 0, +1 or -1.
pub struct VoteTable {
    votes: BTreeMap<(usize, String), i64>,
}

impl VoteTable {
    pub fn seeded(seed: u64, proposals: usize, names: &[String]) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x766f7465);
        let mut votes = BTreeMap::new();
        for k in 0..proposals {
            for n in names {
                votes.insert((k, n.clone()), rng.gen_range(-1..=1));
            }
        }
        VoteTable { votes }
    }

    pub fn vote(&self, proposal: usize, member: &str) -> i64 {
        self.votes[&(proposal, member.to_string())]
    }
}

struct Driver {
    rng: ChaCha8Rng,
    table: Arc<VoteTable>,
    budget: usize,
    proposed: Vec<Term>,
    open: bool,
    /// Current members, as the secretary sees them.
    members: Vec<Sym>,
    next_name: usize,
}

fn decide(alternative: usize, bindings: Subst) -> OracleAnswer {
    OracleAnswer::Decide(OracleDecision { alternative, bindings })
}

impl Oracle for Driver {
    fn decide(&mut self, req: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        // A member holding the ballot adds its scripted vote.
        if let Some((i, alt)) = req.alternatives.iter().enumerate().find(|(_, a)| a.act.functor() == Some(("ballot", 3))) {
            let (var, options) = alt.choices.first().expect("a ballot carries the vote choice");
            let k = self.proposed.len() - 1;
            let pick = match self.table.vote(k, &req.agent) {
                0 => 0,
                1 => 1,
                _ => 2,
            };
            return Ok(decide(i, [(var.clone(), options[pick].clone())].into_iter().collect()));
        }
        if req.state.as_name() == Some("founder") {
            return Ok(decide(0, Subst::new()));
        }
        if &*req.agent != FOUNDER || self.open || self.proposed.len() == self.budget {
            return Ok(OracleAnswer::Pass);
        }
        let Some((i, alt)) = req.alternatives.iter().enumerate().find(|(_, a)| a.act.functor() == Some(("propose", 1))) else {
            return Ok(OracleAnswer::Pass);
        };
        let removable: Vec<&Sym> = self.members.iter().filter(|m| &***m != FOUNDER).collect();
        let proposal = if !removable.is_empty() && self.rng.gen_bool(0.4) {
            Term::app("remove", vec![Term::Name(removable[self.rng.gen_range(0..removable.len())].clone())])
        } else {
            self.next_name += 1;
            Term::app("add", vec![Term::name(&format!("m{}", self.next_name))])
        };
        let var = alt.required.first().expect("the proposal is open").clone();
        self.proposed.push(proposal.clone());
        self.open = true;
        Ok(decide(i, [(var, proposal)].into_iter().collect()))
    }
}

/// One proposal's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub proposal: Term,
    /// Members the ballot circulated through, in order.
    pub voters: Vec<Sym>,
    /// The tally computed from the vote table.
    pub expected_tally: i64,
    /// The tally the ballot came back with.
    pub final_tally: Option<i64>,
    pub applied: bool,
}

impl Outcome {
    pub fn agrees(&self) -> bool {
        self.final_tally == Some(self.expected_tally) && self.applied == (self.expected_tally > 0)
    }
}

pub struct DemocraticRun {
    pub runtime: Runtime,
    pub outcomes: Vec<Outcome>,
}

pub fn run(program: Arc<CheckedProgram>, seed: u64, proposals: usize) -> Result<DemocraticRun, RuntimeError> {
    let names: Vec<String> = std::iter::once(FOUNDER.to_string()).chain((1..=proposals).map(|i| format!("m{i}"))).collect();
    let table = Arc::new(VoteTable::seeded(seed, proposals, &names));
    let mut driver = Driver {
        rng: ChaCha8Rng::seed_from_u64(seed),
        table: table.clone(),
        budget: proposals,
        proposed: Vec::new(),
        open: false,
        members: vec![],
        next_name: 0,
    };
    let mut scheduler = RandomScheduler::new(seed);
    let mut rt = Runtime::new(program)?;
    let mut seen_events = 0;
    for _ in 0..20_000 {
        // Track the secretary's membership list and close the open proposal
        // once the secretary has taken the finished ballot in.
        let secretary = rt.config().agents.values().find(|c| c.state.functor().is_some_and(|(f, _)| f.starts_with("secretary")));
        if let Some(s) = secretary {
            if let Some(("secretary", 1)) = s.state.functor() {
                driver.members = s.state.args()[0].as_list().unwrap_or_default().into_iter().filter_map(|t| t.as_name().map(Sym::from)).collect();
            }
        }
        let closed = rt.trace().events[seen_events..].iter().any(|e| {
            matches!(e, TraceEvent::Input { agent, act } if agent.starts_with("secretary") && is_final_ballot(&act_payload(&rt, *act)))
        });
        if closed {
            driver.open = false;
            rt.wake(FOUNDER);
        }
        seen_events = rt.trace().events.len();
        match rt.step(&mut scheduler, &mut driver)? {
            Some(_) => {}
            None if !driver.open && driver.proposed.len() < proposals => rt.wake(FOUNDER),
            None => break,
        }
    }
    rt.halt(HaltReason::Quiescent, None);
    let outcomes = outcomes(&rt, &table);
    Ok(DemocraticRun { runtime: rt, outcomes })
}

fn act_payload(rt: &Runtime, index: usize) -> Term {
    rt.config().acts.iter().find(|a| a.index == index).expect("known act").payload.clone()
}

fn is_final_ballot(t: &Term) -> bool {
    t.functor() == Some(("ballot", 3)) && t.args()[1].as_list().is_some_and(|l| l.is_empty())
}

/// Reads each proposal's ballot, final tally and effect off the trace.
fn outcomes(rt: &Runtime, table: &VoteTable) -> Vec<Outcome> {
    let mut out: Vec<Outcome> = Vec::new();
    for e in &rt.trace().events {
        let TraceEvent::Act { agent, payload, .. } = e else { continue };
        match payload.functor() {
            Some(("ballot", 3)) if agent.starts_with("secretary") => {
                let voters: Vec<Sym> = payload.args()[1].as_list().unwrap_or_default().iter().filter_map(|t| t.as_name().map(Sym::from)).collect();
                let k = out.len();
                let expected_tally = voters.iter().map(|v| table.vote(k, v)).sum();
                out.push(Outcome { proposal: payload.args()[0].clone(), voters, expected_tally, final_tally: None, applied: false });
            }
            Some(("ballot", 3)) if is_final_ballot(payload) => {
                if let Some(o) = out.last_mut() {
                    o.final_tally = payload.args()[2].as_num().and_then(|n| n.to_i64());
                }
            }
            Some(("activated" | "please_leave", _)) if agent.starts_with("secretary") => {
                if let Some(o) = out.last_mut() {
                    o.applied = true;
                }
            }
            _ => {}
        }
    }
    out
}
