//! Execution of checked programs.
//!
//! A [`Runtime`] holds the configuration — one [`AgentCell`] per agent and a
//! [`MessageStore`] of per-(sender, recipient) FIFO queues — and advances it
//! one transition at a time. Every act an agent signs is broadcast to all
//! other live agents. Receiving an act no rule handles leaves the state
//! unchanged (the act is still consumed and recorded).
//!
//! Human agents decide through an [`Oracle`]: a decision is a separate, traced
//! step whose chosen act is emitted when the agent is next scheduled.
//! Replies from the intermediate state of a combined rule go out without
//! consulting anyone unless they contain a choice. Autonomous agents use the
//! deterministic [`auto_choose`].

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::eval::{self, CondOutcome, EvalError};
use crate::oracle::{auto_choose, Alternative, AutoChoice, Oracle, OracleAnswer, OracleDecision, OracleError, OracleRequest};
use crate::program::{Condition, Rule, Span, SELF_VAR};
use crate::scheduler::{Candidate, Move, Scheduler};
use crate::staticcheck::CheckedProgram;
use crate::term::{match_act_into, match_into, Subst, Sym, Term};
use crate::trace::{Halt, HaltReason, Trace, TraceEvent};

/// A signed act. `index` is its position in the numbered trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Act {
    pub index: usize,
    pub signer: Sym,
    /// Per-signer output counter, starting at 1.
    pub seq: u64,
    pub payload: Term,
}

pub type ActRef = Arc<Act>;

/// Variable standing for the generated name of an `autonomous#...` spawn.
const NEW_AGENT_VAR: &str = "$new";
const STOP: &str = "stop";
pub const DEFAULT_SILENT_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("program is not runnable:\n{0}")]
    NotRunnable(String),
    #[error("agent `{agent}`: silent rules did not settle within {cap} steps")]
    SilentLoop { agent: Sym, cap: usize },
    #[error("agent `{agent}`: rule at {rule} matched `{act}` but its conditions failed")]
    ConditionFailed { agent: Sym, rule: Span, act: String },
    #[error("agent `{agent}`: {reason}")]
    NotEnabled { agent: Sym, reason: String },
    #[error("agent `{agent}` cannot spawn `{name}`: the name is taken")]
    SpawnCollision { agent: Sym, name: Sym },
    #[error("no agent named `{0}`")]
    UnknownAgent(Sym),
    #[error("autonomous agent `{agent}` has {} possible acts", count.map_or("unboundedly many".to_string(), |n| n.to_string()))]
    AutoOracleAmbiguous { agent: Sym, count: Option<usize> },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("agent `{agent}`, rule at {rule}: {source}")]
    Eval { agent: Sym, rule: Span, source: EvalError },
    #[error("agent `{agent}` in state `{state}`: no rule emits `{payload}`")]
    NoRuleForAct { agent: Sym, state: Term, payload: Term },
    #[error("agent `{agent}` in state `{state}`: rules disagree on the result of `{payload}`")]
    AmbiguousAct { agent: Sym, state: Term, payload: Term },
}

impl RuntimeError {
    /// Faults in the contract itself (as opposed to misuse of the API).
    pub fn is_contract_fault(&self) -> bool {
        matches!(
            self,
            RuntimeError::ConditionFailed { .. }
                | RuntimeError::AutoOracleAmbiguous { .. }
                | RuntimeError::Eval { .. }
                | RuntimeError::SilentLoop { .. }
        )
    }
}

/// A decided but not yet emitted act.
#[derive(Clone, Debug, PartialEq)]
struct Prepared {
    rule: usize,
    payload: Term,
    spawn: Option<(Sym, Term)>,
    post: Term,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentCell {
    pub name: Sym,
    /// Current state; `stop` once stopped.
    pub state: Term,
    pub stopped: bool,
    pub autonomous: bool,
    /// The state the agent was created in; its history replays from here.
    pub initial: Term,
    /// Own acts at output time, others' acts at receipt time.
    pub history: Vec<ActRef>,
    pub outputs: u64,
    intent: Option<Prepared>,
    idle: bool,
    awaiting: bool,
    request: Option<u64>,
}

impl AgentCell {
    pub fn new(name: Sym, state: Term, autonomous: bool) -> Self {
        AgentCell {
            name,
            initial: state.clone(),
            state,
            stopped: false,
            autonomous,
            history: Vec::new(),
            outputs: 0,
            intent: None,
            idle: false,
            awaiting: false,
            request: None,
        }
    }

    /// The act the agent's oracle has chosen but the agent has not emitted yet.
    pub fn intent(&self) -> Option<&Term> {
        self.intent.as_ref().map(|p| &p.payload)
    }

    /// The oracle passed in the current state.
    pub fn is_idle(&self) -> bool {
        self.idle
    }

    /// Waiting for an asynchronous oracle answer.
    pub fn is_awaiting(&self) -> bool {
        self.awaiting
    }
}

/// Per-(sender, recipient) FIFO queues.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MessageStore {
    /// Keyed by (recipient, sender).
    queues: BTreeMap<(Sym, Sym), VecDeque<ActRef>>,
}

impl MessageStore {
    pub fn push(&mut self, recipient: &Sym, act: ActRef) {
        self.queues.entry((recipient.clone(), act.signer.clone())).or_default().push_back(act);
    }

    pub fn pop(&mut self, recipient: &Sym, sender: &Sym) -> Option<ActRef> {
        let key = (recipient.clone(), sender.clone());
        let q = self.queues.get_mut(&key)?;
        let act = q.pop_front();
        if q.is_empty() {
            self.queues.remove(&key);
        }
        act
    }

    /// Head of every nonempty queue addressed to `recipient`.
    pub fn heads<'a>(&'a self, recipient: &'a Sym) -> impl Iterator<Item = &'a ActRef> + 'a {
        self.queues
            .range((recipient.clone(), Sym::from(""))..)
            .take_while(move |((r, _), _)| r == recipient)
            .filter_map(|(_, q)| q.front())
    }

    pub fn queue(&self, sender: &Sym, recipient: &Sym) -> impl Iterator<Item = &ActRef> {
        self.queues.get(&(recipient.clone(), sender.clone())).into_iter().flatten()
    }

    /// Every (recipient, act) pair in the store.
    pub fn entries(&self) -> impl Iterator<Item = (&Sym, &ActRef)> {
        self.queues.iter().flat_map(|((r, _), q)| q.iter().map(move |a| (r, a)))
    }

    pub fn len(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    pub fn drop_recipient(&mut self, recipient: &Sym) {
        self.queues.retain(|(r, _), _| r != recipient);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Configuration {
    pub agents: BTreeMap<Sym, AgentCell>,
    pub store: MessageStore,
    /// Number of transitions taken.
    pub step_counter: u64,
    /// Every act emitted so far, in emission order.
    pub acts: Vec<ActRef>,
}

impl Configuration {
    pub fn live_agents(&self) -> impl Iterator<Item = &AgentCell> {
        self.agents.values().filter(|c| !c.stopped)
    }
}

/// What a single scheduled move did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// An act was emitted (its trace index).
    Emitted(usize),
    /// The oracle decided; the decision is traced at this index.
    Consulted(usize),
    /// An act was consumed from a queue (its trace index).
    Received(usize),
    /// The oracle declined; the agent idles until its state changes.
    Passed,
    /// The answer will arrive asynchronously.
    Pending,
    /// A stored decision was no longer applicable and was dropped.
    Dropped,
    /// The oracle's decision was refused; it will be asked again.
    Rejected,
}

impl Outcome {
    pub fn is_transition(&self) -> bool {
        matches!(self, Outcome::Emitted(_) | Outcome::Consulted(_) | Outcome::Received(_))
    }
}

// ---------------------------------------------------------------------------
// Transition functions shared with replay.

fn self_binding(agent: &Sym) -> Subst {
    Subst::new().with(SELF_VAR, Term::Name(agent.clone()))
}

/// Applies silent rules until none applies.
pub fn silent_closure(program: &CheckedProgram, agent: &Sym, mut state: Term, cap: usize) -> Result<Term, RuntimeError> {
    for _ in 0..cap {
        let mut next = None;
        for &id in program.rules_for(&state) {
            let rule = program.rule(id);
            if rule.input.is_some() || rule.is_output() {
                continue;
            }
            let mut theta = self_binding(agent);
            if !match_into(&rule.pre, &state, &mut theta) {
                continue;
            }
            match eval::eval_conditions(&rule.conditions, &theta) {
                Ok(CondOutcome::Satisfied(theta)) => {
                    next = Some(ground(&rule.post, &theta, agent, rule)?);
                    break;
                }
                Ok(_) => {}
                Err(source) => return Err(RuntimeError::Eval { agent: agent.clone(), rule: rule.origin, source }),
            }
        }
        match next {
            Some(s) => state = s,
            None => return Ok(state),
        }
    }
    Err(RuntimeError::SilentLoop { agent: agent.clone(), cap })
}

fn ground(t: &Term, theta: &Subst, agent: &Sym, rule: &Rule) -> Result<Term, RuntimeError> {
    eval::eval_value(&t.substitute(theta)).map_err(|source| RuntimeError::Eval { agent: agent.clone(), rule: rule.origin, source })
}

/// State after `agent` in `state` receives `signer(payload)`; `None` when no
/// rule handles the act. Silent rules are applied to the result.
pub fn input_transition(
    program: &CheckedProgram,
    agent: &Sym,
    state: &Term,
    signer: &Sym,
    payload: &Term,
    cap: usize,
) -> Result<Option<Term>, RuntimeError> {
    let mut failed = None;
    for &id in program.rules_for(state) {
        let rule = program.rule(id);
        let Some(pattern) = &rule.input else { continue };
        let mut theta = self_binding(agent);
        if !match_into(&rule.pre, state, &mut theta) || !match_act_into(pattern, signer, payload, &mut theta) {
            continue;
        }
        match eval::eval_conditions(&rule.conditions, &theta) {
            Ok(CondOutcome::Satisfied(theta)) => {
                let post = ground(&rule.post, &theta, agent, rule)?;
                return silent_closure(program, agent, post, cap).map(Some);
            }
            Ok(_) => {
                failed.get_or_insert(rule.origin);
            }
            Err(source) => return Err(RuntimeError::Eval { agent: agent.clone(), rule: rule.origin, source }),
        }
    }
    match failed {
        Some(rule) => Err(RuntimeError::ConditionFailed { agent: agent.clone(), rule, act: format!("{signer}({payload})") }),
        None => Ok(None),
    }
}

/// Emitted-act pattern of an output rule.
fn act_pattern(rule: &Rule) -> Term {
    match (&rule.output, &rule.spawn) {
        (Some(o), _) => o.payload.clone(),
        (None, Some(s)) => {
            let agent = s.agent.clone().unwrap_or_else(|| Term::var(NEW_AGENT_VAR));
            Term::app("activated", vec![agent, s.state.clone()])
        }
        (None, None) => unreachable!("not an output rule"),
    }
}

/// What emitting an act does to its signer, as reconstructed from the act.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputEffect {
    /// Post-state after silent rules (`stop` if the agent stopped).
    pub post: Term,
    /// The agent created by a spawn act, with its initial state.
    pub spawn: Option<(Sym, Term)>,
    pub autonomous_spawn: bool,
    /// The act was the reply of a combined rule.
    pub reactive: bool,
}

/// The effect of `agent` in `state` emitting `payload` (used to replay histories).
pub fn output_transition(
    program: &CheckedProgram,
    agent: &Sym,
    state: &Term,
    payload: &Term,
    cap: usize,
) -> Result<OutputEffect, RuntimeError> {
    let mut effects: Vec<OutputEffect> = Vec::new();
    for &id in program.rules_for(state) {
        let rule = program.rule(id);
        if !rule.is_output() {
            continue;
        }
        let mut theta = self_binding(agent);
        if !match_into(&rule.pre, state, &mut theta) || !match_into(&act_pattern(rule), payload, &mut theta) {
            continue;
        }
        let Ok(CondOutcome::Satisfied(theta)) = eval::eval_conditions(&rule.conditions, &theta) else { continue };
        let Ok(post) = eval::eval_value(&rule.post.substitute(&theta)) else { continue };
        let spawn = match (&rule.spawn, payload.args()) {
            (Some(_), [Term::Name(n), init]) => Some((n.clone(), init.clone())),
            _ => None,
        };
        let autonomous_spawn = rule.spawn.as_ref().is_some_and(|s| s.is_autonomous());
        if effects.iter().all(|e| e.post != post) {
            effects.push(OutputEffect { post, spawn, autonomous_spawn, reactive: rule.reactive });
        }
    }
    match effects.len() {
        0 => Err(RuntimeError::NoRuleForAct { agent: agent.clone(), state: state.clone(), payload: payload.clone() }),
        1 => {
            let mut effect = effects.pop().expect("one");
            if effect.post.as_name() != Some(STOP) {
                effect.post = silent_closure(program, agent, effect.post, cap)?;
            }
            Ok(effect)
        }
        _ => Err(RuntimeError::AmbiguousAct { agent: agent.clone(), state: state.clone(), payload: payload.clone() }),
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Runtime {
    program: Arc<CheckedProgram>,
    config: Configuration,
    trace: Trace,
    silent_cap: usize,
    next_request: u64,
    numbered: usize,
}

impl Runtime {
    /// Activates `program`: one cell per activation pair, silent rules applied.
    pub fn new(program: Arc<CheckedProgram>) -> Result<Self, RuntimeError> {
        Self::with_silent_cap(program, DEFAULT_SILENT_CAP)
    }

    pub fn with_silent_cap(program: Arc<CheckedProgram>, silent_cap: usize) -> Result<Self, RuntimeError> {
        if !program.is_runnable() {
            let msgs: Vec<String> = program.diagnostics.iter().map(|d| d.render("<program>")).collect();
            return Err(RuntimeError::NotRunnable(msgs.join("\n")));
        }
        let mut config = Configuration::default();
        for a in &program.program.activation {
            let state = silent_closure(&program, &a.agent, a.state.clone(), silent_cap)?;
            config.agents.insert(a.agent.clone(), AgentCell::new(a.agent.clone(), state, false));
        }
        Ok(Runtime { program, config, trace: Trace::default(), silent_cap, next_request: 1, numbered: 0 })
    }

    pub fn program(&self) -> &CheckedProgram {
        &self.program
    }

    pub fn shared_program(&self) -> Arc<CheckedProgram> {
        self.program.clone()
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn silent_cap(&self) -> usize {
        self.silent_cap
    }

    pub fn agent(&self, name: &str) -> Option<&AgentCell> {
        self.config.agents.get(name)
    }

    pub fn states(&self) -> BTreeMap<Sym, Term> {
        self.config.agents.iter().map(|(k, c)| (k.clone(), c.state.clone())).collect()
    }

    fn cell(&self, agent: &str) -> Result<&AgentCell, RuntimeError> {
        self.config.agents.get(agent).ok_or_else(|| RuntimeError::UnknownAgent(agent.into()))
    }

    fn cell_mut(&mut self, agent: &str) -> Result<&mut AgentCell, RuntimeError> {
        self.config.agents.get_mut(agent).ok_or_else(|| RuntimeError::UnknownAgent(agent.into()))
    }

    /// Clears the agent's idle and awaiting marks so it is offered again.
    pub fn wake(&mut self, agent: &str) {
        if let Some(c) = self.config.agents.get_mut(agent) {
            c.idle = false;
            c.awaiting = false;
        }
    }

    fn next_index(&mut self) -> usize {
        self.numbered += 1;
        self.numbered
    }

    /// Whether `agent` sits in the intermediate state of a combined rule,
    /// where it owes a reply and accepts no input.
    pub fn is_intermediate(&self, agent: &str) -> bool {
        self.config
            .agents
            .get(agent)
            .is_some_and(|c| self.program.rules_for(&c.state).iter().any(|&id| self.program.rule(id).reactive))
    }

    /// The output rules applicable in `agent`'s current state, with whatever
    /// the state already determines. Depends on nothing but the agent's cell
    /// (and which names are taken, for spawns).
    pub fn enabled_outputs(&self, agent: &str) -> Result<Vec<Alternative>, RuntimeError> {
        let cell = self.cell(agent)?;
        if cell.stopped {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for &id in self.program.rules_for(&cell.state) {
            let rule = self.program.rule(id);
            if !rule.is_output() {
                continue;
            }
            let mut theta = self_binding(&cell.name);
            if !match_into(&rule.pre, &cell.state, &mut theta) {
                continue;
            }
            let Ok(Some(partial)) = eval::partial_eval(&rule.conditions, &theta) else { continue };
            let theta = partial.theta;
            let spawn_var = rule.spawn.as_ref().and_then(|s| match &s.agent {
                Some(Term::Var(v)) if !theta.contains(v) => Some(v.clone()),
                _ => None,
            });
            if let Some(Some(Term::Name(n))) = rule.spawn.as_ref().map(|s| s.agent.as_ref().map(|a| a.substitute(&theta))) {
                if self.config.agents.contains_key(&n) {
                    continue;
                }
            }
            let ready: Vec<&Sym> = partial.choices.iter().map(|(v, _)| v).collect();
            let produced: Vec<&Sym> = rule
                .conditions
                .iter()
                .filter(|c| !matches!(c, Condition::AssignChoice { var, .. } if !ready.contains(&var)))
                .filter_map(Condition::target)
                .collect();
            let mut open = Vec::new();
            let act = act_pattern(rule);
            act.collect_vars(&mut open);
            if let Some(s) = &rule.spawn {
                s.state.collect_vars(&mut open);
            }
            rule.post.collect_vars(&mut open);
            let required = open
                .into_iter()
                .filter(|v| !theta.contains(v) && !produced.contains(&v) && &**v != NEW_AGENT_VAR)
                .collect();
            out.push(Alternative {
                rule: id,
                origin: rule.origin,
                act: eval::simplify(&act.substitute(&theta)),
                theta,
                required,
                choices: partial.choices,
                conditions: rule.conditions.clone(),
                spawn_var,
                reactive: rule.reactive,
            });
        }
        Ok(out)
    }

    fn output_enabled(&self, cell: &AgentCell) -> bool {
        if cell.stopped || cell.awaiting {
            return false;
        }
        if cell.intent.is_some() {
            return true;
        }
        !cell.idle && self.enabled_outputs(&cell.name).is_ok_and(|alts| !alts.is_empty())
    }

    /// Every transition that could be scheduled now.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        for cell in self.config.live_agents() {
            if !self.is_intermediate(&cell.name) {
                for head in self.config.store.heads(&cell.name) {
                    out.push(Candidate {
                        agent: cell.name.clone(),
                        mv: Move::Input { sender: head.signer.clone(), act: head.index },
                    });
                }
            }
            if self.output_enabled(cell) {
                out.push(Candidate { agent: cell.name.clone(), mv: Move::Output });
            }
        }
        out
    }

    pub fn is_awaiting_oracle(&self) -> bool {
        self.config.agents.values().any(|c| c.awaiting)
    }

    fn fresh_agent_name(&self, state: &Term) -> Sym {
        let base = state.functor().map_or("agent", |(f, _)| f);
        (1..)
            .map(|n| Sym::from(format!("{base}{n}")))
            .find(|n| !self.config.agents.contains_key(n))
            .expect("unbounded")
    }

    /// Evaluates `rule` for `agent` under `theta` into a ground act and post-state.
    fn prepare(&self, agent: &Sym, rule_id: usize, theta: &Subst) -> Result<Prepared, RuntimeError> {
        let rule = self.program.rule(rule_id);
        let not_enabled = |reason: String| RuntimeError::NotEnabled { agent: agent.clone(), reason };
        let cell = self.cell(agent)?;
        let mut check = self_binding(agent);
        if !match_into(&rule.pre, &cell.state, &mut check) {
            return Err(not_enabled(format!("rule at {} does not apply in state `{}`", rule.origin, cell.state)));
        }
        // The pre-state fixes some bindings; the caller supplies the rest.
        for (var, value) in theta.iter() {
            match check.get(var) {
                Some(fixed) if fixed != value => {
                    return Err(not_enabled(format!("`{var}` is `{fixed}` in state `{}`, not `{value}`", cell.state)))
                }
                Some(_) => {}
                None => check.bind(var.clone(), value.clone()),
            }
        }
        let theta = match eval::eval_conditions(&rule.conditions, &check) {
            Ok(CondOutcome::Satisfied(t)) => t,
            Ok(CondOutcome::Failed) => return Err(not_enabled(format!("conditions of rule at {} do not hold", rule.origin))),
            Ok(CondOutcome::NeedsChoice { var, .. }) => return Err(not_enabled(format!("no value chosen for `{var}`"))),
            Err(e) => return Err(not_enabled(format!("rule at {}: {e}", rule.origin))),
        };
        let value = |t: &Term| {
            eval::eval_value(&t.substitute(&theta)).map_err(|e| not_enabled(format!("rule at {}: {e}", rule.origin)))
        };
        let spawn = match &rule.spawn {
            None => None,
            Some(s) => {
                let init = value(&s.state)?;
                let name = match &s.agent {
                    None => self.fresh_agent_name(&init),
                    Some(t) => match value(t)? {
                        Term::Name(n) => n,
                        other => return Err(not_enabled(format!("`{other}` is not an agent name"))),
                    },
                };
                if self.config.agents.contains_key(&name) {
                    return Err(RuntimeError::SpawnCollision { agent: agent.clone(), name });
                }
                Some((name, init))
            }
        };
        let payload = match (&rule.output, &spawn) {
            (Some(o), _) => value(&o.payload)?,
            (None, Some((name, init))) => Term::app("activated", vec![Term::Name(name.clone()), init.clone()]),
            (None, None) => return Err(not_enabled(format!("rule at {} emits nothing", rule.origin))),
        };
        let post = value(&rule.post)?;
        Ok(Prepared { rule: rule_id, payload, spawn, post })
    }

    /// Resolves an oracle decision against the alternatives it answered.
    fn resolve(&self, agent: &Sym, alts: &[Alternative], d: &OracleDecision) -> Result<Prepared, String> {
        let alt = alts.get(d.alternative).ok_or_else(|| format!("no alternative #{}", d.alternative))?;
        let mut theta = alt.theta.clone();
        for (var, value) in d.bindings.iter() {
            let expected = alt.required.contains(var) || alt.choices.iter().any(|(v, _)| v == var);
            if !expected {
                return Err(format!("`{var}` is not open in `{}`", alt.act));
            }
            if !value.is_ground() {
                return Err(format!("`{var}` bound to non-ground `{value}`"));
            }
            theta.bind(var.clone(), value.clone());
        }
        if let Some(missing) = alt.required.iter().find(|v| !theta.contains(v)) {
            return Err(format!("no value for `{missing}`"));
        }
        self.prepare(agent, alt.rule, &theta).map_err(|e| e.to_string())
    }

    fn set_state(&mut self, agent: &Sym, state: Term) -> Result<(), RuntimeError> {
        let state = if state.as_name() == Some(STOP) { state } else { silent_closure(&self.program, agent, state, self.silent_cap)? };
        let cell = self.cell_mut(agent)?;
        if cell.state != state {
            cell.intent = None;
            cell.idle = false;
            cell.awaiting = false;
            cell.request = None;
        }
        cell.stopped = state.as_name() == Some(STOP);
        cell.state = state;
        if cell.stopped {
            self.config.store.drop_recipient(agent);
        }
        Ok(())
    }

    fn commit(&mut self, agent: &Sym, p: Prepared) -> Result<ActRef, RuntimeError> {
        if let Some((name, init)) = &p.spawn {
            let autonomous = self.program.rule(p.rule).spawn.as_ref().is_some_and(|s| s.is_autonomous());
            self.config.agents.insert(name.clone(), AgentCell::new(name.clone(), init.clone(), autonomous));
            // A newcomer catches up on everything said so far.
            for act in &self.config.acts {
                self.config.store.push(name, act.clone());
            }
            self.set_state(name, init.clone())?;
        }
        let index = self.next_index();
        let cell = self.cell_mut(agent)?;
        cell.outputs += 1;
        let act = Arc::new(Act { index, signer: agent.clone(), seq: cell.outputs, payload: p.payload });
        cell.history.push(act.clone());
        let post = p.post;
        let recipients: Vec<Sym> = self.config.live_agents().filter(|c| &c.name != agent).map(|c| c.name.clone()).collect();
        for r in &recipients {
            self.config.store.push(r, act.clone());
        }
        self.config.acts.push(act.clone());
        self.trace.events.push(TraceEvent::Act {
            index: act.index,
            agent: agent.clone(),
            seq: act.seq,
            payload: act.payload.clone(),
            recipients,
        });
        self.set_state(agent, post)?;
        let cell = self.cell_mut(agent)?;
        cell.intent = None;
        cell.idle = false;
        cell.request = None;
        self.config.step_counter += 1;
        Ok(act)
    }

    /// Fires output `rule` for `agent` with the given bindings (which must,
    /// together with the conditions, ground the act and post-state).
    pub fn step_output(&mut self, agent: &str, rule: usize, theta: &Subst) -> Result<ActRef, RuntimeError> {
        let agent: Sym = agent.into();
        let mut full = self_binding(&agent);
        theta.iter().for_each(|(k, v)| full.bind(k.clone(), v.clone()));
        let cell = self.cell(&agent)?;
        if cell.stopped {
            return Err(RuntimeError::NotEnabled { agent, reason: "stopped".into() });
        }
        let p = self.prepare(&agent, rule, &full)?;
        self.commit(&agent, p)
    }

    /// Consumes the head of the queue from `sender` to `agent`.
    pub fn step_input(&mut self, agent: &str, sender: &str) -> Result<ActRef, RuntimeError> {
        let agent: Sym = agent.into();
        let cell = self.cell(&agent)?;
        if cell.stopped {
            return Err(RuntimeError::NotEnabled { agent, reason: "stopped".into() });
        }
        let state = cell.state.clone();
        let sender: Sym = sender.into();
        let act = self
            .config
            .store
            .pop(&agent, &sender)
            .ok_or_else(|| RuntimeError::NotEnabled { agent: agent.clone(), reason: format!("nothing queued from `{sender}`") })?;
        self.cell_mut(&agent)?.history.push(act.clone());
        self.trace.events.push(TraceEvent::Input { agent: agent.clone(), act: act.index });
        self.config.step_counter += 1;
        if let Some(next) = input_transition(&self.program, &agent, &state, &act.signer, &act.payload, self.silent_cap)? {
            self.set_state(&agent, next)?;
        }
        Ok(act)
    }

    /// Performs one scheduled move.
    pub fn perform(&mut self, candidate: &Candidate, oracle: &mut dyn Oracle) -> Result<Outcome, RuntimeError> {
        let agent = candidate.agent.clone();
        match &candidate.mv {
            Move::Input { sender, .. } => self.step_input(&agent, sender).map(|a| Outcome::Received(a.index)),
            Move::Output => self.perform_output(&agent, oracle),
        }
    }

    fn perform_output(&mut self, agent: &Sym, oracle: &mut dyn Oracle) -> Result<Outcome, RuntimeError> {
        if let Some(intent) = self.cell_mut(agent)?.intent.take() {
            // Re-check: a spawn target may have been taken in the meantime.
            return match self.prepare_again(agent, &intent) {
                Ok(()) => self.commit(agent, intent).map(|a| Outcome::Emitted(a.index)),
                Err(_) => Ok(Outcome::Dropped),
            };
        }
        let alts = self.enabled_outputs(agent)?;
        let cell = self.cell(agent)?;
        if alts.is_empty() {
            self.cell_mut(agent)?.idle = true;
            return Ok(Outcome::Passed);
        }
        if cell.autonomous {
            return match auto_choose(&alts) {
                AutoChoice::None => {
                    self.cell_mut(agent)?.idle = true;
                    Ok(Outcome::Passed)
                }
                AutoChoice::One(d) => {
                    let p = self
                        .resolve(agent, &alts, &d)
                        .map_err(|reason| RuntimeError::NotEnabled { agent: agent.clone(), reason })?;
                    self.commit(agent, p).map(|a| Outcome::Emitted(a.index))
                }
                AutoChoice::Ambiguous(count) => Err(RuntimeError::AutoOracleAmbiguous { agent: agent.clone(), count }),
            };
        }
        if let [alt] = alts.as_slice() {
            if alt.reactive && alt.is_determined() {
                return match self.prepare(agent, alt.rule, &alt.theta) {
                    Ok(p) => self.commit(agent, p).map(|a| Outcome::Emitted(a.index)),
                    Err(RuntimeError::NotEnabled { .. }) => Err(RuntimeError::ConditionFailed {
                        agent: agent.clone(),
                        rule: alt.origin,
                        act: alt.act.to_string(),
                    }),
                    Err(e) => Err(e),
                };
            }
        }
        let id = match cell.request {
            Some(id) => id,
            None => {
                let id = self.next_request;
                self.next_request += 1;
                self.cell_mut(agent)?.request = Some(id);
                id
            }
        };
        let cell = self.cell(agent)?;
        let request = OracleRequest {
            id,
            agent: agent.clone(),
            state: cell.state.clone(),
            alternatives: alts,
            live: self.config.live_agents().map(|c| c.name.clone()).collect(),
            taken: self.config.agents.keys().cloned().collect(),
        };
        match oracle.decide(&request)? {
            OracleAnswer::Pass => {
                self.cell_mut(agent)?.idle = true;
                Ok(Outcome::Passed)
            }
            OracleAnswer::Pending => {
                self.cell_mut(agent)?.awaiting = true;
                Ok(Outcome::Pending)
            }
            OracleAnswer::Decide(d) => match self.resolve(agent, &request.alternatives, &d) {
                Ok(p) => {
                    let index = self.next_index();
                    self.trace.events.push(TraceEvent::Oracle { index, agent: agent.clone(), payload: p.payload.clone() });
                    self.config.step_counter += 1;
                    self.cell_mut(agent)?.intent = Some(p);
                    Ok(Outcome::Consulted(index))
                }
                Err(reason) => {
                    oracle.rejected(&request, &reason)?;
                    Ok(Outcome::Rejected)
                }
            },
        }
    }

    fn prepare_again(&self, agent: &Sym, intent: &Prepared) -> Result<(), RuntimeError> {
        if let Some((name, _)) = &intent.spawn {
            if self.config.agents.contains_key(name) {
                return Err(RuntimeError::SpawnCollision { agent: agent.clone(), name: name.clone() });
            }
        }
        Ok(())
    }

    /// Picks and performs one move; `None` when nothing is enabled.
    pub fn step(&mut self, scheduler: &mut dyn Scheduler, oracle: &mut dyn Oracle) -> Result<Option<Outcome>, RuntimeError> {
        let candidates = self.candidates();
        if candidates.is_empty() {
            return Ok(None);
        }
        let i = scheduler.pick(&candidates);
        self.perform(&candidates[i], oracle).map(Some)
    }

    /// Runs until quiescence, `max_steps` transitions, or a fault. The trace
    /// gets a halt record in every case; contract faults are also returned.
    pub fn run(&mut self, scheduler: &mut dyn Scheduler, oracle: &mut dyn Oracle, max_steps: usize) -> Result<HaltReason, RuntimeError> {
        let mut steps = 0;
        let reason = loop {
            if steps >= max_steps {
                break HaltReason::MaxSteps;
            }
            match self.step(scheduler, oracle) {
                Ok(None) if self.is_awaiting_oracle() => break HaltReason::AwaitingOracle,
                Ok(None) => break HaltReason::Quiescent,
                Ok(Some(o)) => steps += usize::from(o.is_transition()),
                Err(e) => {
                    self.halt(HaltReason::Fault, Some(e.to_string()));
                    return Err(e);
                }
            }
        };
        self.halt(reason, None);
        Ok(reason)
    }

    /// Writes the halt record.
    pub fn halt(&mut self, reason: HaltReason, fault: Option<String>) {
        let inputs = self.trace.events.len() - self.numbered;
        self.trace.halt = Some(Halt { reason, events: self.numbered, inputs, states: self.states(), fault });
    }
}

/// Searches every schedule of `rt` (with `oracle` answering) for a run whose
/// numbered trace lines are exactly `goal`, and returns the moves producing
/// it. Depth-first; a branch is abandoned as soon as its trace leaves the
/// goal. `max_nodes` bounds the number of configurations visited.
pub fn find_schedule<O: Oracle + Clone>(rt: &Runtime, oracle: &O, goal: &[String], max_nodes: usize) -> Option<Vec<Candidate>> {
    fn dfs<O: Oracle + Clone>(
        rt: &Runtime,
        oracle: &O,
        goal: &[String],
        path: &mut Vec<Candidate>,
        budget: &mut usize,
    ) -> bool {
        let lines = rt.trace().text_lines();
        if lines == goal {
            return true;
        }
        for c in rt.candidates() {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            let (mut next, mut o) = (rt.clone(), oracle.clone());
            let Ok(outcome) = next.perform(&c, &mut o) else { continue };
            let lines = next.trace().text_lines();
            if lines.len() > goal.len() || lines[..] != goal[..lines.len()] {
                continue;
            }
            // Declining to act changes nothing worth exploring further.
            if matches!(outcome, Outcome::Passed | Outcome::Pending | Outcome::Rejected) {
                continue;
            }
            path.push(c);
            if dfs(&next, &o, goal, path, budget) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut path = Vec::new();
    let mut budget = max_nodes;
    dfs(rt, oracle, goal, &mut path, &mut budget).then_some(path)
}
