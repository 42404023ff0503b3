//! Oracles resolve the choices a contract leaves open: which output an agent
//! performs, and how the variables of that output are instantiated.
//!
//! Providers:
//! - [`ScriptedOracle`]: per-agent ordered lists of payloads.
//! - [`auto_choose`]: the deterministic choice made for autonomous agents.
//! - [`RandomOracle`]: seeded sampling, for simulation and property tests.
//! - [`InteractiveOracle`]: asynchronous answers from connected sessions.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{self, CondOutcome};
use crate::parser::{self, ParseError};
use crate::program::{CmpOp, Condition, Span, SELF_VAR};
use crate::term::{unify, Subst, Sym, Term};

/// One way the agent could act right now.
#[derive(Clone, Debug, PartialEq)]
pub struct Alternative {
    /// Rule id in the checked program.
    pub rule: usize,
    pub origin: Span,
    /// Bindings already fixed by the agent's state (always includes `Self`).
    pub theta: Subst,
    /// The act this alternative emits, with unresolved variables.
    pub act: Term,
    /// Variables the decision has to bind.
    pub required: Vec<Sym>,
    /// `Var := a, b, or c` choices whose options are known.
    pub choices: Vec<(Sym, Vec<Term>)>,
    /// The rule's conditions; they are re-checked when the decision is applied.
    pub conditions: Vec<Condition>,
    /// Variable naming a new agent, when the act is a spawn.
    pub spawn_var: Option<Sym>,
    /// Output half of a combined rule: a reply rather than a fresh initiative.
    pub reactive: bool,
}

impl Alternative {
    /// Bindings (for required and choice variables) that make this
    /// alternative emit exactly `payload`, if any.
    pub fn bind_payload(&self, payload: &Term) -> Option<Subst> {
        let theta = unify(&self.act, payload)?;
        let wanted: HashSet<&Sym> = self.required.iter().chain(self.choices.iter().map(|(v, _)| v)).collect();
        Some(theta.normalized().iter().filter(|(k, _)| wanted.contains(k)).map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn is_determined(&self) -> bool {
        self.required.is_empty() && self.choices.is_empty()
    }

    /// Every full binding of this alternative's choice variables, when no
    /// free variable remains; `None` when some variable is unconstrained.
    pub fn ground_instances(&self) -> Option<Vec<Subst>> {
        if !self.required.is_empty() {
            return None;
        }
        let mut combos = vec![Subst::new()];
        for (var, options) in &self.choices {
            let distinct: BTreeSet<&Term> = options.iter().collect();
            combos = combos
                .into_iter()
                .flat_map(|c| distinct.iter().map(move |o| c.clone().with(var, (*o).clone())))
                .collect();
        }
        Some(
            combos
                .into_iter()
                .filter(|c| {
                    let mut theta = self.theta.clone();
                    c.iter().for_each(|(k, v)| theta.bind(k.clone(), v.clone()));
                    matches!(eval::eval_conditions(&self.conditions, &theta), Ok(CondOutcome::Satisfied(_)))
                })
                .collect(),
        )
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.act)?;
        if !self.required.is_empty() {
            let vars: Vec<&str> = self.required.iter().map(|v| &**v).collect();
            write!(f, " [bind {}]", vars.join(", "))?;
        }
        for (var, opts) in &self.choices {
            let opts: Vec<String> = opts.iter().map(|o| o.to_string()).collect();
            write!(f, " [{var} in {}]", opts.join(" | "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleRequest {
    pub id: u64,
    pub agent: Sym,
    pub state: Term,
    pub alternatives: Vec<Alternative>,
    /// Agents currently able to receive acts.
    pub live: Vec<Sym>,
    /// Every agent name in use, live or stopped (spawn targets must avoid these).
    pub taken: Vec<Sym>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleDecision {
    pub alternative: usize,
    pub bindings: Subst,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleAnswer {
    Decide(OracleDecision),
    /// Decline to act now; the agent idles until its state changes.
    Pass,
    /// The answer will arrive later (see [`InteractiveOracle`]).
    Pending,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle script for `{agent}`: `{entry}` matches none of the offered acts ({offered})")]
    ScriptMismatch { agent: Sym, entry: Term, offered: String },
    #[error("decision for `{agent}` rejected: {reason}")]
    Rejected { agent: Sym, reason: String },
    #[error("invalid oracle script: {0}")]
    BadScript(String),
}

pub trait Oracle {
    fn decide(&mut self, request: &OracleRequest) -> Result<OracleAnswer, OracleError>;

    /// Called when the runtime refuses a decision this oracle produced.
    /// Returning `Ok` lets the request be issued again.
    fn rejected(&mut self, request: &OracleRequest, reason: &str) -> Result<(), OracleError> {
        Err(OracleError::Rejected { agent: request.agent.clone(), reason: reason.to_string() })
    }
}

impl<O: Oracle + ?Sized> Oracle for Box<O> {
    fn decide(&mut self, request: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        (**self).decide(request)
    }

    fn rejected(&mut self, request: &OracleRequest, reason: &str) -> Result<(), OracleError> {
        (**self).rejected(request, reason)
    }
}

/// An oracle that always passes.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoOracle;

impl Oracle for NoOracle {
    fn decide(&mut self, _: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        Ok(OracleAnswer::Pass)
    }
}

// ---------------------------------------------------------------------------

/// Answers each agent's requests from its own ordered list of payloads.
///
/// An entry is consumed by the first request it can answer; when the next
/// entry fits none of the offered acts the script is wrong and
/// [`OracleError::ScriptMismatch`] is raised. Exhausted agents pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScriptedOracle {
    script: BTreeMap<Sym, VecDeque<Term>>,
}

impl ScriptedOracle {
    pub fn new(script: impl IntoIterator<Item = (Sym, Vec<Term>)>) -> Self {
        ScriptedOracle { script: script.into_iter().map(|(k, v)| (k, v.into())).collect() }
    }

    /// Parses the JSON form `{"agent": ["payload", ...], ...}`.
    pub fn from_json(src: &str) -> Result<Self, OracleError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(src).map_err(|e| OracleError::BadScript(e.to_string()))?;
        let mut script = Vec::new();
        for (agent, entries) in raw {
            let terms = entries
                .iter()
                .map(|e| parser::parse_term(e))
                .collect::<Result<Vec<_>, ParseError>>()
                .map_err(|e| OracleError::BadScript(format!("agent `{agent}`: {e}")))?;
            script.push((Sym::from(agent), terms));
        }
        Ok(Self::new(script))
    }

    pub fn remaining(&self, agent: &str) -> usize {
        self.script.get(agent).map_or(0, VecDeque::len)
    }

    pub fn is_exhausted(&self) -> bool {
        self.script.values().all(VecDeque::is_empty)
    }
}

impl Oracle for ScriptedOracle {
    fn decide(&mut self, request: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        let Some(queue) = self.script.get_mut(&request.agent) else { return Ok(OracleAnswer::Pass) };
        let Some(entry) = queue.front() else { return Ok(OracleAnswer::Pass) };
        for (i, alt) in request.alternatives.iter().enumerate() {
            if let Some(bindings) = alt.bind_payload(entry) {
                queue.pop_front();
                return Ok(OracleAnswer::Decide(OracleDecision { alternative: i, bindings }));
            }
        }
        let offered: Vec<String> = request.alternatives.iter().map(|a| a.to_string()).collect();
        Err(OracleError::ScriptMismatch { agent: request.agent.clone(), entry: entry.clone(), offered: offered.join("; ") })
    }
}

// ---------------------------------------------------------------------------

/// Outcome of the deterministic choice made for autonomous agents.
#[derive(Debug, Clone, PartialEq)]
pub enum AutoChoice {
    /// Nothing can be done.
    None,
    One(OracleDecision),
    /// More than one ground act is possible (the count; `None` if unbounded).
    Ambiguous(Option<usize>),
}

/// Picks the unique ground instance among `alternatives`, if there is one.
pub fn auto_choose(alternatives: &[Alternative]) -> AutoChoice {
    let mut found = None;
    let mut count = 0usize;
    for (i, alt) in alternatives.iter().enumerate() {
        let Some(instances) = alt.ground_instances() else { return AutoChoice::Ambiguous(None) };
        for bindings in instances {
            count += 1;
            found.get_or_insert(OracleDecision { alternative: i, bindings });
        }
    }
    match (count, found) {
        (0, _) => AutoChoice::None,
        (1, Some(d)) => AutoChoice::One(d),
        (n, _) => AutoChoice::Ambiguous(Some(n)),
    }
}

// ---------------------------------------------------------------------------

/// Samples decisions at random from a seeded generator.
///
/// Candidate values for a variable are the live agents, a fresh agent name
/// (for spawns), the numbers 0 to 3, the constants occurring in the program,
/// and the subterms of the agent's state. A variable that the rule compares
/// with `Self` (as in `Other =\= Self`) names an agent, so it is drawn from
/// the live agents only. Decisions whose conditions fail are discarded; if
/// no candidate survives a few attempts the oracle passes.
#[derive(Clone, Debug)]
pub struct RandomOracle {
    rng: ChaCha8Rng,
    constants: Vec<Term>,
    attempts: usize,
    pass_probability: f64,
}

impl RandomOracle {
    pub fn new(seed: u64, constants: Vec<Term>) -> Self {
        RandomOracle { rng: ChaCha8Rng::seed_from_u64(seed), constants, attempts: 16, pass_probability: 0.0 }
    }

    /// Makes the oracle decline with the given probability, emulating idle humans.
    pub fn with_pass_probability(mut self, p: f64) -> Self {
        self.pass_probability = p;
        self
    }

    fn pool(&self, request: &OracleRequest) -> Vec<Term> {
        let mut pool: BTreeSet<Term> = request.live.iter().map(|a| Term::Name(a.clone())).collect();
        pool.extend((0..=3).map(Term::int));
        pool.extend(self.constants.iter().cloned());
        fn subterms(t: &Term, out: &mut BTreeSet<Term>) {
            if t.is_ground() {
                out.insert(t.clone());
            }
            if let Some(items) = t.as_list() {
                items.iter().for_each(|i| subterms(i, out));
            } else {
                t.args().iter().for_each(|a| subterms(a, out));
            }
        }
        request.state.args().iter().for_each(|a| subterms(a, &mut pool));
        pool.into_iter().collect()
    }

    fn fresh_name(&mut self, request: &OracleRequest) -> Term {
        let taken: HashSet<&str> = request.taken.iter().map(|s| &**s).collect();
        let mut n = request.taken.len();
        loop {
            n += 1;
            let name = format!("agent{n}");
            if !taken.contains(name.as_str()) {
                return Term::name(&name);
            }
        }
    }
}

fn names_agent(conditions: &[Condition], var: &str) -> bool {
    let is = |t: &Term, name: &str| matches!(t, Term::Var(v) if &**v == name);
    conditions.iter().any(|c| match c {
        Condition::Compare { op: CmpOp::Eq | CmpOp::Ne, lhs, rhs } => {
            (is(lhs, var) && is(rhs, SELF_VAR)) || (is(rhs, var) && is(lhs, SELF_VAR))
        }
        _ => false,
    })
}

impl Oracle for RandomOracle {
    fn decide(&mut self, request: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        if self.pass_probability > 0.0 && self.rng.gen_bool(self.pass_probability) {
            return Ok(OracleAnswer::Pass);
        }
        let pool = self.pool(request);
        let mut order: Vec<usize> = (0..request.alternatives.len()).collect();
        order.shuffle(&mut self.rng);
        for i in order {
            let alt = &request.alternatives[i];
            for _ in 0..self.attempts {
                let mut bindings = Subst::new();
                for var in &alt.required {
                    let value = if alt.spawn_var.as_ref() == Some(var) {
                        self.fresh_name(request)
                    } else if names_agent(&alt.conditions, var) && !request.live.is_empty() {
                        Term::Name(request.live.choose(&mut self.rng).cloned().expect("nonempty"))
                    } else {
                        pool.choose(&mut self.rng).cloned().expect("pool is never empty")
                    };
                    bindings.bind(var.clone(), value);
                }
                for (var, options) in &alt.choices {
                    bindings.bind(var.clone(), options.choose(&mut self.rng).cloned().expect("choices are nonempty"));
                }
                let mut theta = alt.theta.clone();
                bindings.iter().for_each(|(k, v)| theta.bind(k.clone(), v.clone()));
                if matches!(eval::eval_conditions(&alt.conditions, &theta), Ok(CondOutcome::Satisfied(_))) {
                    return Ok(OracleAnswer::Decide(OracleDecision { alternative: i, bindings }));
                }
                if alt.required.is_empty() && alt.choices.is_empty() {
                    break;
                }
            }
        }
        Ok(OracleAnswer::Pass)
    }
}

// ---------------------------------------------------------------------------

/// Bridges oracle requests to external sessions.
///
/// The runtime loop calls [`Oracle::decide`]; for a claimed agent the request
/// is queued in the outbox and `Pending` is returned. Answers are handed in
/// with [`InteractiveOracle::answer`], after which the loop wakes the agent
/// so the runtime asks again and receives the stored answer. Unclaimed
/// agents pass.
#[derive(Debug, Default)]
pub struct InteractiveOracle {
    claimed: HashSet<Sym>,
    outstanding: HashMap<Sym, OracleRequest>,
    answers: HashMap<Sym, (u64, OracleAnswer)>,
    outbox: Vec<OracleRequest>,
    rejections: Vec<(OracleRequest, String)>,
}

impl InteractiveOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn claim(&mut self, agent: &str) {
        self.claimed.insert(agent.into());
    }

    /// Releases an agent; an outstanding request for it is answered with Pass.
    pub fn release(&mut self, agent: &str) {
        self.claimed.remove(agent);
        if let Some(req) = self.outstanding.remove(agent) {
            self.answers.insert(agent.into(), (req.id, OracleAnswer::Pass));
        }
    }

    pub fn is_claimed(&self, agent: &str) -> bool {
        self.claimed.contains(agent)
    }

    pub fn outstanding(&self, agent: &str) -> Option<&OracleRequest> {
        self.outstanding.get(agent)
    }

    pub fn outstanding_requests(&self) -> impl Iterator<Item = &OracleRequest> {
        self.outstanding.values()
    }

    /// Requests issued since the last call.
    pub fn take_outbox(&mut self) -> Vec<OracleRequest> {
        std::mem::take(&mut self.outbox)
    }

    /// Decisions refused by the runtime since the last call, with reasons.
    pub fn take_rejections(&mut self) -> Vec<(OracleRequest, String)> {
        std::mem::take(&mut self.rejections)
    }

    /// Records an answer to request `id`. Returns the agent it belongs to, or
    /// `None` when no such request is outstanding (stale or unknown id).
    pub fn answer(&mut self, id: u64, answer: OracleAnswer) -> Option<Sym> {
        let agent = self.outstanding.iter().find(|(_, r)| r.id == id).map(|(a, _)| a.clone())?;
        self.outstanding.remove(&agent);
        self.answers.insert(agent.clone(), (id, answer));
        Some(agent)
    }
}

impl Oracle for InteractiveOracle {
    fn decide(&mut self, request: &OracleRequest) -> Result<OracleAnswer, OracleError> {
        if let Some((id, answer)) = self.answers.remove(&request.agent) {
            // An answer is only valid for the situation it was given in.
            if id == request.id {
                return Ok(answer);
            }
        }
        if !self.claimed.contains(&request.agent) {
            return Ok(OracleAnswer::Pass);
        }
        if self.outstanding.get(&request.agent).is_some_and(|r| r.id == request.id) {
            return Ok(OracleAnswer::Pending);
        }
        self.outstanding.insert(request.agent.clone(), request.clone());
        self.outbox.push(request.clone());
        Ok(OracleAnswer::Pending)
    }

    fn rejected(&mut self, request: &OracleRequest, reason: &str) -> Result<(), OracleError> {
        self.rejections.push((request.clone(), reason.to_string()));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_term;

    fn alt(act: &str, required: &[&str]) -> Alternative {
        Alternative {
            rule: 0,
            origin: Span::default(),
            theta: Subst::new().with("Self", Term::name("gal")),
            act: parse_term(act).unwrap(),
            required: required.iter().map(|s| Sym::from(*s)).collect(),
            choices: vec![],
            conditions: vec![],
            spawn_var: None,
            reactive: false,
        }
    }

    fn request(alts: Vec<Alternative>) -> OracleRequest {
        OracleRequest {
            id: 1,
            agent: "gal".into(),
            state: parse_term("tourist(roaming)").unwrap(),
            alternatives: alts,
            live: vec!["gal".into(), "ouri".into()],
            taken: vec!["gal".into(), "ouri".into()],
        }
    }

    #[test]
    fn script_entries_ground_alternatives_in_order() {
        let mut o = ScriptedOracle::from_json(r#"{"gal": ["reserve(ouri)", "reserve(ghost)"]}"#).unwrap();
        let req = request(vec![alt("reserve(Host)", &["Host"])]);
        let OracleAnswer::Decide(d) = o.decide(&req).unwrap() else { panic!() };
        assert_eq!(d.bindings.get("Host"), Some(&Term::name("ouri")));
        // Names outside the contract are still acceptable choices.
        let OracleAnswer::Decide(d) = o.decide(&req).unwrap() else { panic!() };
        assert_eq!(d.bindings.get("Host"), Some(&Term::name("ghost")));
        assert_eq!(o.decide(&req).unwrap(), OracleAnswer::Pass);
    }

    #[test]
    fn script_mismatch_and_empty_script() {
        let mut o = ScriptedOracle::from_json(r#"{"gal": ["checkout(ouri)"]}"#).unwrap();
        let req = request(vec![alt("reserve(Host)", &["Host"])]);
        assert!(matches!(o.decide(&req), Err(OracleError::ScriptMismatch { .. })));
        assert_eq!(ScriptedOracle::default().decide(&req).unwrap(), OracleAnswer::Pass);
        assert!(ScriptedOracle::from_json(r#"{"gal": ["reserve("]}"#).is_err());
    }

    #[test]
    fn auto_choice_requires_a_unique_ground_act() {
        assert_eq!(auto_choose(&[]), AutoChoice::None);
        assert!(matches!(auto_choose(&[alt("ballot(x,[],0)", &[])]), AutoChoice::One(_)));
        assert_eq!(auto_choose(&[alt("reserve(Host)", &["Host"])]), AutoChoice::Ambiguous(None));
        assert_eq!(auto_choose(&[alt("a", &[]), alt("b", &[])]), AutoChoice::Ambiguous(Some(2)));
    }

    #[test]
    fn random_oracle_is_seed_deterministic() {
        let req = request(vec![alt("reserve(Host)", &["Host"]), alt("wave", &[])]);
        let run = |seed| {
            let mut o = RandomOracle::new(seed, vec![Term::name("nimrod")]);
            (0..20).map(|_| o.decide(&req).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert!(run(7).iter().all(|a| matches!(a, OracleAnswer::Decide(_))));
    }

    #[test]
    fn interactive_oracle_round_trip() {
        let mut o = InteractiveOracle::new();
        let req = request(vec![alt("reserve(Host)", &["Host"])]);
        assert_eq!(o.decide(&req).unwrap(), OracleAnswer::Pass, "unclaimed agents pass");
        o.claim("gal");
        assert_eq!(o.decide(&req).unwrap(), OracleAnswer::Pending);
        assert_eq!(o.take_outbox().len(), 1);
        assert_eq!(o.answer(99, OracleAnswer::Pass), None, "unknown request id");
        let d = OracleAnswer::Decide(OracleDecision { alternative: 0, bindings: Subst::new().with("Host", Term::name("ouri")) });
        assert_eq!(o.answer(1, d.clone()).as_deref(), Some("gal"));
        assert_eq!(o.decide(&req).unwrap(), d);
    }
}
