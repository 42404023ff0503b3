//! Executable versions of the ledger model: histories, ledgers, diagonals
//! and soundness; the store invariant and history replay for recorded runs;
//! balances for currency contracts; the compiler from abstract social
//! contracts to programs; and implementation/morphism checks between finite
//! transition systems.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::decimal::Decimal;
use crate::oracle::OracleRequest;
use crate::program::{Activation, Program, RoleProgram, Rule, Span};
use crate::runtime::{input_transition, output_transition, silent_closure, Act, ActRef, AgentCell, Configuration, Runtime, RuntimeError};
use crate::staticcheck::{self, CheckedProgram};
use crate::term::{ActPattern, Signer, Sym, Term};
use crate::trace::{Trace, TraceEvent};

/// An act as the ledger model sees it: who signed what.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedAct {
    pub signer: Sym,
    pub payload: Term,
}

impl SignedAct {
    pub fn new(signer: &str, payload: Term) -> Self {
        SignedAct { signer: signer.into(), payload }
    }
}

impl From<&Act> for SignedAct {
    fn from(a: &Act) -> Self {
        SignedAct { signer: a.signer.clone(), payload: a.payload.clone() }
    }
}

impl fmt::Display for SignedAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.signer, self.payload)
    }
}

pub type History = Vec<SignedAct>;
/// One history per agent.
pub type Ledger = BTreeMap<Sym, History>;

/// The subsequence of `u`-signed acts.
pub fn restrict(h: &[SignedAct], u: &str) -> History {
    h.iter().filter(|a| &*a.signer == u).cloned().collect()
}

pub fn is_prefix<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    a.len() <= b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}

/// Each agent's own acts, as recorded in its own history.
pub fn diagonal(l: &Ledger) -> BTreeMap<Sym, History> {
    l.iter().map(|(v, h)| (v.clone(), restrict(h, v))).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("`{observer}` records a `{signer}`-act at position {position} that `{signer}` never performed there")]
pub struct SoundnessViolation {
    pub observer: Sym,
    pub signer: Sym,
    /// Index into the observer's `signer`-restricted history.
    pub position: usize,
}

/// Every agent's view of every other agent is a prefix of what that agent did.
pub fn check_sound(l: &Ledger) -> Result<(), SoundnessViolation> {
    let diag = diagonal(l);
    let empty = Vec::new();
    for (u, h) in l {
        let mut seen: BTreeMap<&Sym, usize> = BTreeMap::new();
        for act in h {
            let i = seen.entry(&act.signer).or_insert(0);
            let own = diag.get(&act.signer).unwrap_or(&empty);
            if own.get(*i) != Some(act) {
                return Err(SoundnessViolation { observer: u.clone(), signer: act.signer.clone(), position: *i });
            }
            *i += 1;
        }
    }
    Ok(())
}

/// Two histories agree on every agent's acts, up to one being ahead.
pub fn check_consistent(h1: &[SignedAct], h2: &[SignedAct]) -> bool {
    let signers: BTreeSet<&Sym> = h1.iter().chain(h2).map(|a| &a.signer).collect();
    signers.into_iter().all(|v| {
        let (a, b) = (restrict(h1, v), restrict(h2, v));
        is_prefix(&a, &b) || is_prefix(&b, &a)
    })
}

/// All histories in the ledger are pairwise consistent. Linear in the
/// ledger size: for each signer the restrictions must form a prefix chain,
/// so each is compared against the longest one only.
pub fn ledger_consistent(l: &Ledger) -> bool {
    let mut views: BTreeMap<&Sym, Vec<Vec<&SignedAct>>> = BTreeMap::new();
    for h in l.values() {
        let mut per: BTreeMap<&Sym, Vec<&SignedAct>> = BTreeMap::new();
        for a in h {
            per.entry(&a.signer).or_default().push(a);
        }
        for (v, seq) in per {
            views.entry(v).or_default().push(seq);
        }
    }
    views.values().all(|seqs| {
        let longest = seqs.iter().max_by_key(|s| s.len()).expect("nonempty");
        seqs.iter().all(|s| is_prefix(s, longest))
    })
}

pub fn history_of(cell: &AgentCell) -> History {
    cell.history.iter().map(|a| SignedAct::from(&**a)).collect()
}

pub fn ledger_of(c: &Configuration) -> Ledger {
    c.agents.iter().map(|(v, cell)| (v.clone(), history_of(cell))).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("queue {sender} -> {recipient} holds [{}] but should hold [{}]", fmt_acts(.found), fmt_acts(.expected))]
pub struct StoreViolation {
    pub recipient: Sym,
    pub sender: Sym,
    pub expected: History,
    pub found: History,
}

fn fmt_acts(acts: &[SignedAct]) -> String {
    acts.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

/// The store holds exactly, for every live recipient `v` and sender `u`, the
/// part of `u`'s own acts that `v` has not received yet, in order. Stopped
/// agents receive nothing.
pub fn check_store_invariant(c: &Configuration) -> Result<(), StoreViolation> {
    let ledger = ledger_of(c);
    let diag = diagonal(&ledger);
    let mut found: BTreeMap<(Sym, Sym), History> = BTreeMap::new();
    for (r, act) in c.store.entries() {
        found.entry((r.clone(), act.signer.clone())).or_default().push(SignedAct::from(&**act));
    }
    let mut expected: BTreeMap<(Sym, Sym), History> = BTreeMap::new();
    for v in c.live_agents() {
        for (u, own) in &diag {
            if *u == v.name {
                continue;
            }
            let received = restrict(&ledger[&v.name], u).len();
            if received < own.len() {
                expected.insert((v.name.clone(), u.clone()), own[received..].to_vec());
            }
        }
    }
    let keys: BTreeSet<&(Sym, Sym)> = found.keys().chain(expected.keys()).collect();
    for key in keys {
        let (e, f) = (expected.get(key).cloned().unwrap_or_default(), found.get(key).cloned().unwrap_or_default());
        if e != f {
            return Err(StoreViolation { recipient: key.0.clone(), sender: key.1.clone(), expected: e, found: f });
        }
    }
    Ok(())
}

/// Folds an agent's history through the program from `initial`: own acts as
/// outputs, everyone else's as inputs.
pub fn replay_state(history: &[SignedAct], program: &CheckedProgram, agent: &str, initial: &Term) -> Result<Term, RuntimeError> {
    let agent: Sym = agent.into();
    let cap = crate::runtime::DEFAULT_SILENT_CAP;
    let mut state = silent_closure(program, &agent, initial.clone(), cap)?;
    for act in history {
        if act.signer == agent {
            state = output_transition(program, &agent, &state, &act.payload, cap)?.post;
        } else if let Some(next) = input_transition(program, &agent, &state, &act.signer, &act.payload, cap)? {
            state = next;
        }
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Currency

fn pay_parts(payload: &Term) -> Option<(&Term, Decimal)> {
    match payload.functor()? {
        ("pay", 1) => Some((&payload.args()[0], Decimal::from(1))),
        ("pay", 2) => Some((&payload.args()[0], payload.args()[1].as_num()?.clone())),
        _ => None,
    }
}

/// `c` plus what `u` was paid minus what `u` paid, over the `pay(V)` (one
/// coin) and `pay(V, X)` (X coins) acts in `h`.
pub fn balance_of(h: &[SignedAct], u: &str, c: &Decimal) -> Decimal {
    let mut bal = c.clone();
    for act in h {
        let Some((payee, amount)) = pay_parts(&act.payload) else { continue };
        if &*act.signer == u {
            bal = &bal - &amount;
        } else if payee.as_name() == Some(u) {
            bal = &bal + &amount;
        }
    }
    bal
}

/// A currency contract recognised from its rules: a role whose init rule is
/// `R --> R(N)` and which accepts `pay` acts; optionally an input that mints
/// one coin (such as a clock tick).
#[derive(Clone, Debug, PartialEq)]
pub struct CurrencyModel {
    pub role: Sym,
    pub initial: Decimal,
    pub mint: Option<ActPattern>,
}

impl CurrencyModel {
    pub fn detect(program: &Program) -> Option<Self> {
        program.roles.iter().find_map(|role| {
            let rules = &role.rules;
            let initial = rules.iter().find_map(|r| {
                (r.pre.as_name() == Some(&*role.name) && r.input.is_none() && !r.is_output())
                    .then(|| match r.post.functor() {
                        Some((f, 1)) if f == &*role.name => r.post.args()[0].as_num().cloned(),
                        _ => None,
                    })
                    .flatten()
            })?;
            let inputs: Vec<&ActPattern> = rules.iter().filter_map(|r| r.input.as_ref()).collect();
            if !inputs.iter().any(|i| pay_parts_pattern(&i.payload)) {
                return None;
            }
            let mint = inputs.iter().find(|i| !pay_parts_pattern(&i.payload)).map(|i| (*i).clone());
            Some(CurrencyModel { role: role.name.clone(), initial, mint })
        })
    }

    /// Balance of `u` according to its own history `h`.
    pub fn balance(&self, h: &[SignedAct], u: &str) -> Decimal {
        let mut bal = balance_of(h, u, &self.initial);
        if let Some(m) = &self.mint {
            let minted = h.iter().filter(|a| &*a.signer != u && mint_matches(m, a)).count() as i64;
            bal = &bal + &Decimal::from(minted);
        }
        bal
    }

    /// Whether `state` belongs to this currency's role, with its balance.
    pub fn state_balance<'a>(&self, state: &'a Term) -> Option<&'a Decimal> {
        match state.functor() {
            Some((f, 1)) if f == &*self.role => state.args()[0].as_num(),
            _ => None,
        }
    }
}

fn pay_parts_pattern(t: &Term) -> bool {
    matches!(t.functor(), Some(("pay", 1 | 2)))
}

fn mint_matches(pattern: &ActPattern, act: &SignedAct) -> bool {
    let signer_ok = match &pattern.signer {
        Signer::Name(n) => *n == act.signer,
        _ => true,
    };
    signer_ok && crate::term::match_term(&pattern.payload, &act.payload).is_some()
}

// ---------------------------------------------------------------------------
// Finite transition systems

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FiniteTS {
    pub states: BTreeSet<String>,
    pub initial: String,
    pub transitions: BTreeSet<(String, String)>,
}

impl FiniteTS {
    pub fn new(initial: impl Into<String>) -> Self {
        let initial = initial.into();
        FiniteTS { states: [initial.clone()].into(), initial, transitions: BTreeSet::new() }
    }

    pub fn add(&mut self, from: impl Into<String>, to: impl Into<String>) {
        let (from, to) = (from.into(), to.into());
        self.states.insert(from.clone());
        self.states.insert(to.clone());
        self.transitions.insert((from, to));
    }

    fn successors(&self) -> HashMap<&str, Vec<&str>> {
        let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
        for (a, b) in &self.transitions {
            succ.entry(a).or_default().push(b);
        }
        succ
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CounterExample {
    #[error("the mapping is undefined on `{0}`")]
    Unmapped(String),
    #[error("the initial state maps to `{found}`, not `{expected}`")]
    Initial { expected: String, found: String },
    #[error("no implementation run realises specification transition {from} -> {to}")]
    MissingRun { from: String, to: String },
    #[error("implementation transition {from} -> {to} maps to a non-transition")]
    BadStep { from: String, to: String },
    #[error("implementation transition {from} -> {to} does not map to a specification transition")]
    NotMorphism { from: String, to: String },
    #[error("specification transition between the images of {from} and {to} has no implementation counterpart")]
    NotStrict { from: String, to: String },
}

/// Checks that `imp` implements `spec` via `f`, or, with `strict`, that `f`
/// is a strict morphism (which implies implementation).
pub fn check_implementation(
    imp: &FiniteTS,
    spec: &FiniteTS,
    f: &BTreeMap<String, String>,
    strict: bool,
) -> Result<(), CounterExample> {
    let map = |s: &String| f.get(s).ok_or_else(|| CounterExample::Unmapped(s.clone()));
    for s in &imp.states {
        map(s)?;
    }
    let init = map(&imp.initial)?;
    if *init != spec.initial {
        return Err(CounterExample::Initial { expected: spec.initial.clone(), found: init.clone() });
    }
    if strict {
        for (a, b) in &imp.transitions {
            if !spec.transitions.contains(&(map(a)?.clone(), map(b)?.clone())) {
                return Err(CounterExample::NotMorphism { from: a.clone(), to: b.clone() });
            }
        }
        let mut preimage: BTreeMap<&String, Vec<&String>> = BTreeMap::new();
        for s in &imp.states {
            preimage.entry(map(s)?).or_default().push(s);
        }
        for (x, y) in &spec.transitions {
            for a in preimage.get(x).into_iter().flatten() {
                for b in preimage.get(y).into_iter().flatten() {
                    if !imp.transitions.contains(&((*a).clone(), (*b).clone())) {
                        return Err(CounterExample::NotStrict { from: (*a).clone(), to: (*b).clone() });
                    }
                }
            }
        }
        return Ok(());
    }
    for (a, b) in &imp.transitions {
        let (fa, fb) = (map(a)?, map(b)?);
        if fa != fb && !spec.transitions.contains(&(fa.clone(), fb.clone())) {
            return Err(CounterExample::BadStep { from: a.clone(), to: b.clone() });
        }
    }
    let succ = imp.successors();
    for (x, y) in &spec.transitions {
        // Search runs of length >= 1 from any preimage of x to any preimage of y.
        let mut queue: VecDeque<&str> =
            imp.states.iter().filter(|s| f.get(*s) == Some(x)).flat_map(|s| succ.get(s.as_str()).into_iter().flatten().copied()).collect();
        let mut seen: BTreeSet<&str> = queue.iter().copied().collect();
        let mut found = false;
        while let Some(s) = queue.pop_front() {
            if f.get(s) == Some(y) {
                found = true;
                break;
            }
            for n in succ.get(s).into_iter().flatten() {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        if !found {
            return Err(CounterExample::MissingRun { from: x.clone(), to: y.clone() });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Abstract social contracts and their compilation

/// One ledger transition: `agent` appends `act` to its history.
#[derive(Clone, Debug, PartialEq)]
pub struct ScTransition {
    pub from: Ledger,
    pub agent: Sym,
    pub act: SignedAct,
    pub to: Ledger,
}

/// A social contract given by an explicit list of ledger transitions.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialContract {
    pub agents: Vec<Sym>,
    pub transitions: Vec<ScTransition>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AtodError {
    #[error("transition {index} is not a valid ledger transition: {reason}")]
    NotAValidSC { index: usize, reason: String },
}

/// State term encoding agent `v`'s history: `h(v, [signed(u, a), ...])`.
pub fn encode_history(v: &str, h: &[SignedAct]) -> Term {
    let acts = h.iter().map(|a| Term::app("signed", vec![Term::Name(a.signer.clone()), a.payload.clone()]));
    Term::app("h", vec![Term::name(v), Term::list(acts.collect::<Vec<_>>())])
}

/// Canonical label of a ledger, matching the rendering of compiled states.
pub fn ledger_label(l: &Ledger) -> String {
    l.iter().map(|(v, h)| format!("{v}={}", encode_history(v, h))).collect::<Vec<_>>().join(";")
}

impl SocialContract {
    pub fn initial(&self) -> Ledger {
        self.agents.iter().map(|v| (v.clone(), Vec::new())).collect()
    }

    /// Builds the contract reachable from the empty ledger when agent `v`
    /// may emit `outputs(v, l_v)` (a function of its own history only, so
    /// the result is output-closed) and may receive the next act of any
    /// other agent whenever `accepts(v, l_v, act)`. Ledgers are explored
    /// breadth-first; exploration stops with `None` past `max_transitions`.
    pub fn generate(
        agents: &[&str],
        outputs: impl Fn(&str, &[SignedAct]) -> Vec<Term>,
        accepts: impl Fn(&str, &[SignedAct], &SignedAct) -> bool,
        max_transitions: usize,
    ) -> Option<SocialContract> {
        let agents: Vec<Sym> = agents.iter().map(|a| Sym::from(*a)).collect();
        let initial: Ledger = agents.iter().map(|v| (v.clone(), Vec::new())).collect();
        let mut transitions = Vec::new();
        let mut seen = BTreeSet::from([ledger_label(&initial)]);
        let mut queue = VecDeque::from([initial]);
        while let Some(l) = queue.pop_front() {
            let diag = diagonal(&l);
            for v in &agents {
                let h = &l[v];
                let mut moves: Vec<SignedAct> = outputs(v, h).into_iter().map(|p| SignedAct { signer: v.clone(), payload: p }).collect();
                for u in agents.iter().filter(|u| *u != v) {
                    if let Some(next) = diag[u].get(restrict(h, u).len()) {
                        if accepts(v, h, next) {
                            moves.push(next.clone());
                        }
                    }
                }
                for act in moves {
                    let mut to = l.clone();
                    to.get_mut(v).expect("agent").push(act.clone());
                    if transitions.len() == max_transitions {
                        return None;
                    }
                    if seen.insert(ledger_label(&to)) {
                        queue.push_back(to.clone());
                    }
                    transitions.push(ScTransition { from: l.clone(), agent: v.clone(), act, to });
                }
            }
        }
        Some(SocialContract { agents, transitions })
    }

    pub fn transition_system(&self) -> FiniteTS {
        let mut ts = FiniteTS::new(ledger_label(&self.initial()));
        for t in &self.transitions {
            ts.add(ledger_label(&t.from), ledger_label(&t.to));
        }
        ts
    }

    /// Every transition is sound, and outputs depend only on the actor's
    /// own history (output closure).
    pub fn validate(&self) -> Result<(), AtodError> {
        let bad = |index, reason: String| AtodError::NotAValidSC { index, reason };
        let mut states = vec![self.initial()];
        states.extend(self.transitions.iter().flat_map(|t| [t.from.clone(), t.to.clone()]));
        for (i, t) in self.transitions.iter().enumerate() {
            let (Some(before), Some(after)) = (t.from.get(&t.agent), t.to.get(&t.agent)) else {
                return Err(bad(i, format!("`{}` is not an agent", t.agent)));
            };
            let mut expected = before.clone();
            expected.push(t.act.clone());
            if *after != expected {
                return Err(bad(i, format!("`{}`'s history is not extended by `{}`", t.agent, t.act)));
            }
            if t.from.iter().any(|(v, h)| *v != t.agent && t.to.get(v) != Some(h)) || t.from.len() != t.to.len() {
                return Err(bad(i, "another agent's history changed".into()));
            }
            if check_sound(&t.from).is_err() || check_sound(&t.to).is_err() {
                return Err(bad(i, "unsound ledger".into()));
            }
            if t.act.signer == t.agent {
                for l in &states {
                    if l.get(&t.agent) != Some(before) {
                        continue;
                    }
                    let present = self.transitions.iter().any(|o| o.from == *l && o.agent == t.agent && o.act == t.act);
                    if !present {
                        return Err(bad(i, format!("not output-closed: `{}` cannot emit `{}` from {}", t.agent, t.act, ledger_label(l))));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Compiles a social contract into a grounded program: for every transition
/// by `v` that appends `u(a)`, an output rule `h_v --> a, h_v'` when `u = v`
/// and an input rule `h_v, u(a) --> h_v'` otherwise.
pub fn atod_compile(sc: &SocialContract) -> Result<CheckedProgram, AtodError> {
    sc.validate()?;
    let mut rules: Vec<Rule> = Vec::new();
    for t in &sc.transitions {
        let pre = encode_history(&t.agent, &t.from[&t.agent]);
        let post = encode_history(&t.agent, &t.to[&t.agent]);
        let (input, output) = if t.act.signer == t.agent {
            (None, Some(ActPattern::new(Signer::Wildcard, t.act.payload.clone())))
        } else {
            (Some(ActPattern::new(Signer::Name(t.act.signer.clone()), t.act.payload.clone())), None)
        };
        let rule = Rule { pre, input, output, spawn: None, post, conditions: vec![], origin: Span::default(), reactive: false };
        if !rules.contains(&rule) {
            rules.push(rule);
        }
    }
    let activation = sc
        .agents
        .iter()
        .map(|v| Activation { agent: v.clone(), state: encode_history(v, &[]), origin: Span::default() })
        .collect();
    let program = Program { activation, roles: vec![RoleProgram { name: "h".into(), rules }] };
    Ok(staticcheck::check(program))
}

/// The reachable configurations of a program whose output choices are all
/// finite, explored exhaustively.
#[derive(Clone, Debug)]
pub struct Exploration {
    pub ts: FiniteTS,
    /// Configuration label to the label of its agent states alone (the
    /// store dropped).
    pub states_only: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExploreError {
    #[error("more than {0} reachable configurations")]
    TooManyStates(usize),
    #[error("agent `{agent}` has an output with unbounded choices: {alternative}")]
    Unbounded { agent: Sym, alternative: String },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// Label of the agent states: `v=state;...`.
pub fn states_label(c: &Configuration) -> String {
    c.agents.iter().map(|(v, cell)| format!("{v}={}", cell.state)).collect::<Vec<_>>().join(";")
}

/// Label of a whole configuration: agent states plus store contents.
pub fn configuration_label(c: &Configuration) -> String {
    let mut store: BTreeMap<(Sym, Sym), Vec<String>> = BTreeMap::new();
    for (r, a) in c.store.entries() {
        store.entry((r.clone(), a.signer.clone())).or_default().push(a.payload.to_string());
    }
    let store: Vec<String> = store.into_iter().map(|((r, s), ps)| format!("{s}->{r}:[{}]", ps.join(","))).collect();
    format!("{}|{}", states_label(c), store.join(";"))
}

/// How exploration treats an input that no rule handles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputMode {
    /// As the runtime does: the act is consumed and recorded, the state stays.
    Discard,
    /// As in the formal model: there is no such transition, and the act
    /// waits in the store until some rule accepts it.
    RuleDefined,
}

/// Enumerates every configuration reachable under any schedule and any
/// choice of output bindings.
pub fn explore(program: Arc<CheckedProgram>, mode: InputMode, max_states: usize) -> Result<Exploration, ExploreError> {
    let root = Runtime::new(program)?;
    let root_label = configuration_label(root.config());
    let mut ts = FiniteTS::new(root_label.clone());
    let mut states_only = BTreeMap::from([(root_label.clone(), states_label(root.config()))]);
    let mut queue = VecDeque::from([root]);
    while let Some(rt) = queue.pop_front() {
        let from = configuration_label(rt.config());
        let mut next = Vec::new();
        for cell in rt.config().live_agents() {
            let senders: BTreeSet<Sym> = rt.config().store.heads(&cell.name).map(|a| a.signer.clone()).collect();
            for s in senders {
                if mode == InputMode::RuleDefined {
                    let head = rt.config().store.queue(&s, &cell.name).next().expect("sender has a head");
                    let cap = rt.silent_cap();
                    if input_transition(rt.program(), &cell.name, &cell.state, &s, &head.payload, cap)?.is_none() {
                        continue;
                    }
                }
                let mut n = rt.clone();
                n.step_input(&cell.name, &s)?;
                next.push(n);
            }
            for alt in rt.enabled_outputs(&cell.name)? {
                let instances = alt
                    .ground_instances()
                    .ok_or_else(|| ExploreError::Unbounded { agent: cell.name.clone(), alternative: alt.to_string() })?;
                for bindings in instances {
                    let mut theta = alt.theta.clone();
                    bindings.iter().for_each(|(k, v)| theta.bind(k.clone(), v.clone()));
                    let mut n = rt.clone();
                    n.step_output(&cell.name, alt.rule, &theta)?;
                    next.push(n);
                }
            }
        }
        for n in next {
            let to = configuration_label(n.config());
            if !ts.states.contains(&to) {
                if ts.states.len() >= max_states {
                    return Err(ExploreError::TooManyStates(max_states));
                }
                states_only.insert(to.clone(), states_label(n.config()));
                queue.push_back(n);
            }
            ts.add(from.clone(), to);
        }
    }
    Ok(Exploration { ts, states_only })
}

// ---------------------------------------------------------------------------
// Trace verification

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Numbered trace index (or, for inputs, the event's position) of the
    /// first failure.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                let at = c.position.map(|p| format!(" at event {p}")).unwrap_or_default();
                format!("{} {}{at}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Names of the checks [`verify_trace`] performs, in report order.
pub const TRACE_CHECKS: &[&str] =
    &["numbering", "replay", "fifo", "oracle", "soundness", "consistency", "store", "final-state"];

struct Checker {
    results: BTreeMap<&'static str, (Option<usize>, String)>,
}

impl Checker {
    fn fail(&mut self, name: &'static str, position: usize, detail: String) {
        self.results.entry(name).or_insert((Some(position), detail));
    }

    fn failed(&self, name: &str) -> bool {
        self.results.contains_key(name)
    }
}

/// Replays `trace` against `program` and checks it event by event: event
/// numbering and per-signer sequence numbers; that every act is explained
/// by the program; per-sender FIFO delivery; that volitional acts of humans
/// follow their oracle decision; ledger soundness, consistency and the store
/// invariant after every event; and the final states in the halt record.
/// Currency contracts additionally get balance checks.
pub fn verify_trace(program: Arc<CheckedProgram>, trace: &Trace) -> Report {
    let cap = crate::runtime::DEFAULT_SILENT_CAP;
    let mut ck = Checker { results: BTreeMap::new() };
    let currency = CurrencyModel::detect(&program.program);
    let mut config = Configuration::default();
    for a in &program.program.activation {
        match silent_closure(&program, &a.agent, a.state.clone(), cap) {
            Ok(s) => {
                config.agents.insert(a.agent.clone(), AgentCell::new(a.agent.clone(), s, false));
            }
            Err(e) => ck.fail("replay", 0, e.to_string()),
        }
    }
    let members = |config: &Configuration, c: &CurrencyModel| -> Vec<Sym> {
        config.agents.values().filter(|cell| c.state_balance(&cell.state).is_some() || cell.stopped).map(|c| c.name.clone()).collect()
    };
    let mut acts: HashMap<usize, ActRef> = HashMap::new();
    let mut oracle: BTreeMap<Sym, Term> = BTreeMap::new();
    let mut numbered = 0usize;
    let mut balance_members: Vec<Sym> = currency.as_ref().map(|c| members(&config, c)).unwrap_or_default();
    let mut balance_fail: Option<(usize, String)> = None;
    let mut supply_fail: Option<(usize, String)> = None;
    let mut nonneg_fail: Option<(usize, String)> = None;

    for (pos, event) in trace.events.iter().enumerate() {
        let at = event.index().unwrap_or(numbered);
        if let Some(i) = event.index() {
            numbered += 1;
            if i != numbered {
                ck.fail("numbering", at, format!("expected index {numbered}, found {i}"));
            }
        }
        if ck.failed("replay") {
            break;
        }
        match event {
            TraceEvent::Oracle { agent, payload, .. } => {
                if !config.agents.get(agent).is_some_and(|c| !c.stopped) {
                    ck.fail("oracle", at, format!("oracle decision for absent or stopped `{agent}`"));
                }
                oracle.insert(agent.clone(), payload.clone());
            }
            TraceEvent::Act { index, agent, seq, payload, recipients } => {
                let Some(cell) = config.agents.get(agent).filter(|c| !c.stopped) else {
                    ck.fail("replay", at, format!("act by absent or stopped `{agent}`"));
                    break;
                };
                if *seq != cell.outputs + 1 {
                    ck.fail("numbering", at, format!("`{agent}` act has seq {seq}, expected {}", cell.outputs + 1));
                }
                let effect = match output_transition(&program, agent, &cell.state, payload, cap) {
                    Ok(e) => e,
                    Err(e) => {
                        ck.fail("replay", at, e.to_string());
                        break;
                    }
                };
                let decided = oracle.remove(agent);
                if !cell.autonomous && !effect.reactive && decided.as_ref() != Some(payload) {
                    ck.fail("oracle", at, format!("`{agent}({payload})` was not preceded by its oracle decision"));
                } else if decided.as_ref().is_some_and(|d| d != payload) {
                    ck.fail("oracle", at, format!("`{agent}` emitted `{payload}` after deciding otherwise"));
                }
                if let Some((name, init)) = &effect.spawn {
                    if config.agents.contains_key(name) {
                        ck.fail("replay", at, format!("spawned name `{name}` already exists"));
                        break;
                    }
                    match silent_closure(&program, name, init.clone(), cap) {
                        Ok(s) => {
                            config.agents.insert(name.clone(), AgentCell::new(name.clone(), s, effect.autonomous_spawn));
                        }
                        Err(e) => {
                            ck.fail("replay", at, e.to_string());
                            break;
                        }
                    }
                    for a in &config.acts {
                        config.store.push(name, a.clone());
                    }
                }
                let act = Arc::new(Act { index: *index, signer: agent.clone(), seq: *seq, payload: payload.clone() });
                let expected: Vec<Sym> = config.live_agents().filter(|c| &c.name != agent).map(|c| c.name.clone()).collect();
                if *recipients != expected {
                    ck.fail("replay", at, format!("recipients {recipients:?}, expected {expected:?}"));
                }
                for r in &expected {
                    config.store.push(r, act.clone());
                }
                config.acts.push(act.clone());
                acts.insert(*index, act.clone());
                let cell = config.agents.get_mut(agent).expect("present");
                cell.outputs += 1;
                cell.history.push(act);
                cell.stopped = effect.post.as_name() == Some("stop");
                cell.state = effect.post;
                if cell.stopped {
                    config.store.drop_recipient(agent);
                }
                if let Some(c) = &currency {
                    for m in members(&config, c) {
                        if !balance_members.contains(&m) {
                            balance_members.push(m);
                        }
                    }
                }
            }
            TraceEvent::Input { agent, act } => {
                let Some(a) = acts.get(act).cloned() else {
                    ck.fail("fifo", pos, format!("`{agent}` received unknown act {act}"));
                    break;
                };
                let head = config.store.queue(&a.signer, agent).next().map(|h| h.index);
                if head != Some(*act) {
                    ck.fail("fifo", pos, format!("`{agent}` received act {act} but the head of its queue from `{}` is {head:?}", a.signer));
                    break;
                }
                config.store.pop(agent, &a.signer);
                let cell = config.agents.get_mut(agent).expect("queued for a live agent");
                cell.history.push(a.clone());
                match input_transition(&program, agent, &cell.state, &a.signer, &a.payload, cap) {
                    Ok(Some(next)) => {
                        if next != cell.state {
                            // A decision is only good for the state it was made in.
                            oracle.remove(agent);
                        }
                        cell.stopped = next.as_name() == Some("stop");
                        cell.state = next;
                        if cell.stopped {
                            config.store.drop_recipient(agent);
                        }
                    }
                    Ok(None) => {}
                    Err(e) => {
                        ck.fail("replay", pos, e.to_string());
                        break;
                    }
                }
            }
        }

        let ledger = ledger_of(&config);
        if !ck.failed("soundness") {
            if let Err(v) = check_sound(&ledger) {
                ck.fail("soundness", at, v.to_string());
            }
        }
        if !ck.failed("consistency") && !ledger_consistent(&ledger) {
            ck.fail("consistency", at, "some pair of histories is inconsistent".into());
        }
        if !ck.failed("store") {
            if let Err(v) = check_store_invariant(&config) {
                ck.fail("store", at, v.to_string());
            }
        }
        if let Some(c) = &currency {
            let mut supply = Decimal::from(0);
            for m in &balance_members {
                let cell = &config.agents[m];
                let bal = c.balance(&ledger[m], m);
                supply = &supply + &bal;
                if bal.is_negative() && nonneg_fail.is_none() {
                    nonneg_fail = Some((at, format!("`{m}` balance {bal}")));
                }
                if let Some(live) = c.state_balance(&cell.state) {
                    if *live != bal && balance_fail.is_none() {
                        balance_fail = Some((at, format!("`{m}`: history gives {bal}, state holds {live}")));
                    }
                }
            }
            // Coins are conserved: what members hold plus what is in flight
            // to members plus what was paid to non-members equals the
            // endowments plus minted coins.
            let mut in_flight = Decimal::from(0);
            for (r, a) in config.store.entries() {
                if let Some((payee, amount)) = pay_parts(&a.payload) {
                    if payee.as_name() == Some(&**r) && balance_members.contains(r) {
                        in_flight = &in_flight + &amount;
                    }
                }
            }
            let mut lost = Decimal::from(0);
            let mut minted = Decimal::from(0);
            for a in &config.acts {
                if let Some((payee, amount)) = pay_parts(&a.payload) {
                    if balance_members.contains(&a.signer) && !payee.as_name().is_some_and(|p| balance_members.iter().any(|m| &**m == p)) {
                        lost = &lost + &amount;
                    }
                }
            }
            if let Some(m) = &c.mint {
                for v in &balance_members {
                    let n = ledger[v].iter().filter(|a| a.signer != *v && mint_matches(m, a)).count() as i64;
                    minted = &minted + &Decimal::from(n);
                }
            }
            let lhs = &(&supply + &in_flight) + &lost;
            let rhs = &(&c.initial * &Decimal::from(balance_members.len() as i64)) + &minted;
            if lhs != rhs && supply_fail.is_none() {
                supply_fail = Some((at, format!("held {supply} + in flight {in_flight} + lost {lost} != issued {rhs}")));
            }
        }
    }

    match &trace.halt {
        None => ck.fail("final-state", numbered, "trace has no halt record".into()),
        Some(h) if !ck.failed("replay") => {
            let states: BTreeMap<Sym, Term> = config.agents.iter().map(|(k, c)| (k.clone(), c.state.clone())).collect();
            if h.states != states {
                let diff: Vec<String> = states
                    .iter()
                    .filter(|(k, v)| h.states.get(*k) != Some(v))
                    .map(|(k, v)| format!("{k}: replay {v}, recorded {}", h.states.get(k).map_or("-".into(), |t| t.to_string())))
                    .collect();
                ck.fail("final-state", numbered, diff.join("; "));
            }
            if h.events != numbered {
                ck.fail("final-state", numbered, format!("halt record counts {} events, trace has {numbered}", h.events));
            }
            let inputs = trace.events.len() - numbered;
            if h.inputs != inputs {
                ck.fail("final-state", numbered, format!("halt record counts {} inputs, trace has {inputs}", h.inputs));
            }
        }
        Some(_) => {}
    }

    let mut report = Report::default();
    let detail = |name: &str| match name {
        "numbering" => "event indices and per-signer seq numbers are contiguous",
        "replay" => "every event is explained by the program",
        "fifo" => "each input is the head of its sender's queue",
        "oracle" => "volitional acts follow their oracle decisions",
        "soundness" => "every prefix ledger is sound",
        "consistency" => "histories are pairwise consistent at every prefix",
        "store" => "the store holds exactly the undelivered acts at every prefix",
        _ => "replayed states match the halt record",
    };
    for name in TRACE_CHECKS {
        let (position, d) = match ck.results.remove(name) {
            Some((p, d)) => (p, d),
            None => (None, detail(name).to_string()),
        };
        report.checks.push(CheckResult { name, passed: position.is_none(), position, detail: d });
    }
    if currency.is_some() {
        for (name, fail, ok) in [
            ("balance-nonnegative", nonneg_fail, "no balance is ever negative"),
            ("balance-matches-state", balance_fail, "balances from histories equal the balances in states"),
            ("supply", supply_fail, "coins are conserved"),
        ] {
            report.checks.push(match fail {
                Some((p, d)) => CheckResult { name, passed: false, position: Some(p), detail: d },
                None => CheckResult { name, passed: true, position: None, detail: ok.into() },
            });
        }
    }
    report
}

/// Constants occurring in a program's rules (a sampling pool for random oracles).
pub fn program_constants(program: &CheckedProgram) -> Vec<Term> {
    staticcheck::default_universe(program.rules())
        .into_iter()
        .filter(|t| !matches!(t.as_name(), Some("c1" | "c2" | "c3")))
        .collect()
}

/// Renders an oracle request for humans (used by the console protocol).
pub fn describe_request(req: &OracleRequest) -> Vec<String> {
    req.alternatives.iter().map(|a| a.to_string()).collect()
}
