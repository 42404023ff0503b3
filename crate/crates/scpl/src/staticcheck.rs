//! Compiler passes over parsed programs.
//!
//! [`check`] runs, in order: combined-rule desugaring, signature insertion,
//! role validation and the explicit-nondeterminism check. The result is a
//! [`CheckedProgram`] that the runtime executes and the verifier replays.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::eval::{self, CondOutcome};
use crate::program::{self_signed, CmpOp, Condition, Program, RoleProgram, Rule, RuleKind, Span, SELF_VAR};
use crate::term::{unify_into, ActPattern, Fresh, Signer, Subst, Sym, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationKind {
    ExplicitND,
    MissingInitRule,
    UnknownRole,
    UnboundConditionVar,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Evidence that two rules break explicit nondeterminism: a unifier of their
/// (pre-state, act) keys under which the post-states still differ.
#[derive(Clone, Debug, PartialEq)]
pub struct NdWitness {
    pub theta: Subst,
    pub post1: Term,
    pub post2: Term,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
    /// Source positions of the rules involved (first one is the primary).
    pub spans: Vec<Span>,
    pub witness: Option<NdWitness>,
}

impl Violation {
    fn new(kind: ViolationKind, message: String, spans: Vec<Span>) -> Self {
        Violation { kind, message, spans, witness: None }
    }

    pub fn span(&self) -> Span {
        self.spans.first().copied().unwrap_or_default()
    }

    /// `file:line:col: kind: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}: {}: {}", self.span(), self.kind, self.message)
    }

    pub fn to_json(&self, file: &str) -> serde_json::Value {
        let mut v = serde_json::json!({
            "file": file,
            "line": self.span().line,
            "col": self.span().col,
            "kind": self.kind,
            "message": self.message,
            "rules": self.spans.iter().map(|s| format!("{s}")).collect::<Vec<_>>(),
        });
        if let Some(w) = &self.witness {
            v["witness"] = serde_json::json!({
                "theta": w.theta.iter().map(|(k, t)| (k.to_string(), t.to_string())).collect::<BTreeMap<_, _>>(),
                "post1": w.post1.to_string(),
                "post2": w.post2.to_string(),
            });
        }
        v
    }
}

/// A program after all static passes, indexed for execution.
#[derive(Clone, Debug)]
pub struct CheckedProgram {
    pub program: Program,
    pub diagnostics: Vec<Violation>,
    rules: Vec<Rule>,
    index: HashMap<(Sym, usize), Vec<usize>>,
}

impl CheckedProgram {
    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: usize) -> &Rule {
        &self.rules[id]
    }

    /// Ids of rules whose pre-state has the same functor and arity as `state`.
    pub fn rules_for(&self, state: &Term) -> &[usize] {
        state
            .functor()
            .and_then(|(f, n)| self.index.get(&(Sym::from(f), n)))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }

    /// Whether the program can be executed (no violation that breaks the
    /// runtime's determinism or name resolution).
    pub fn is_runnable(&self) -> bool {
        !self.diagnostics.iter().any(|d| matches!(d.kind, ViolationKind::ExplicitND | ViolationKind::UnknownRole))
    }

    pub fn role_names(&self) -> impl Iterator<Item = &str> {
        self.program.roles.iter().map(|r| &*r.name)
    }
}

// ---------------------------------------------------------------------------
// Desugaring

/// Generates state names that occur nowhere in a program: `x`, `x1`, `x2`, ...
#[derive(Debug, Clone)]
pub struct FreshNames {
    used: HashSet<String>,
    next: usize,
}

impl FreshNames {
    pub fn for_program(program: &Program) -> Self {
        let mut used = HashSet::new();
        let mut add = |t: &Term| t.for_each_symbol(&mut |s| {
            used.insert(s.to_string());
        });
        for a in &program.activation {
            add(&Term::Name(a.agent.clone()));
            add(&a.state);
        }
        for r in program.rules() {
            add(&r.pre);
            add(&r.post);
            for act in r.input.iter().chain(r.output.iter()) {
                if let Signer::Name(n) = &act.signer {
                    add(&Term::Name(n.clone()));
                }
                add(&act.payload);
            }
            if let Some(s) = &r.spawn {
                s.agent.iter().for_each(&mut add);
                add(&s.state);
            }
            for c in &r.conditions {
                c.map_terms(&mut |t| {
                    add(t);
                    t.clone()
                });
            }
        }
        FreshNames { used, next: 0 }
    }

    pub fn next_name(&mut self) -> Sym {
        loop {
            let candidate = if self.next == 0 { "x".to_string() } else { format!("x{}", self.next) };
            self.next += 1;
            if self.used.insert(candidate.clone()) {
                return candidate.into();
            }
        }
    }
}

/// Splits every combined rule `S, m --> m', S'` into `S, m --> x(V..)` and
/// `x(V..) --> m', S'`, where `V..` are the variables shared by both sides.
///
/// Conditions move to the output half. Comparisons that read only left-hand
/// variables are also kept on the input half as a guard, so that an input
/// the output half could never answer is not accepted into a dead state.
pub fn desugar_combined(role: &RoleProgram, fresh: &mut FreshNames) -> RoleProgram {
    let mut rules = Vec::new();
    for rule in &role.rules {
        if rule.kind() != RuleKind::Combined {
            rules.push(rule.clone());
            continue;
        }
        let lhs = rule.lhs_vars();
        let mut rhs = Vec::new();
        rule.rhs_vars_into(&mut rhs);
        rule.conditions.iter().for_each(|c| c.collect_vars(&mut rhs));
        let shared: Vec<Term> = lhs.iter().filter(|v| rhs.contains(v)).map(|v| Term::Var(v.clone())).collect();
        let mid = Term::app(&fresh.next_name(), shared);
        let guards = rule
            .conditions
            .iter()
            .filter(|c| matches!(c, Condition::Compare { .. }) && c.inputs().iter().all(|v| lhs.contains(v)))
            .cloned()
            .collect();
        rules.push(Rule {
            pre: rule.pre.clone(),
            input: rule.input.clone(),
            output: None,
            spawn: None,
            post: mid.clone(),
            conditions: guards,
            origin: rule.origin,
            reactive: false,
        });
        rules.push(Rule {
            pre: mid,
            input: None,
            output: rule.output.clone(),
            spawn: rule.spawn.clone(),
            post: rule.post.clone(),
            conditions: rule.conditions.clone(),
            origin: rule.origin,
            reactive: true,
        });
    }
    RoleProgram { name: role.name.clone(), rules }
}

/// Makes every output act explicitly `Self`-signed. Idempotent.
pub fn insert_signatures(role: &RoleProgram) -> RoleProgram {
    let rules = role
        .rules
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if let Some(out) = &r.output {
                if out.signer == Signer::Wildcard {
                    r.output = Some(self_signed(out.payload.clone()));
                }
            }
            r
        })
        .collect();
    RoleProgram { name: role.name.clone(), rules }
}

// ---------------------------------------------------------------------------
// Explicit nondeterminism

const SELF_CONST: &str = "$self";

/// The act a rule emits, as a payload term (spawns emit `activated(New, State)`).
pub fn emitted_payload(rule: &Rule, fresh: &mut Fresh) -> Option<Term> {
    if let Some(o) = &rule.output {
        return Some(o.payload.clone());
    }
    rule.spawn.as_ref().map(|s| {
        let agent = s.agent.clone().unwrap_or_else(|| Term::Var(fresh.next_var()));
        Term::app("activated", vec![agent, s.state.clone()])
    })
}

/// Key used for overlap detection: pre-state plus a tagged act.
fn nd_key(rule: &Rule, fresh: &mut Fresh) -> (Term, Option<Term>) {
    let act = match rule.kind() {
        RuleKind::Silent => None,
        RuleKind::Input | RuleKind::Combined => {
            let i = rule.input.as_ref().expect("input rule");
            Some(Term::app("in", vec![i.to_term(fresh)]))
        }
        RuleKind::Output => Some(Term::app("out", vec![emitted_payload(rule, fresh).expect("output rule")])),
    };
    (rule.pre.clone(), act)
}

fn rename_rule(rule: &Rule, fresh: &mut Fresh) -> Rule {
    let mut map = HashMap::new();
    let self_sub = Subst::new().with(SELF_VAR, Term::name(SELF_CONST));
    let sub = |t: &Term, map: &mut HashMap<Sym, Sym>, fresh: &mut Fresh| t.substitute(&self_sub).rename_with(map, fresh);
    let act = |a: &ActPattern, map: &mut HashMap<Sym, Sym>, fresh: &mut Fresh| {
        let signer = match &a.signer {
            Signer::Var(v) if &**v == SELF_VAR => Signer::Name(SELF_CONST.into()),
            _ => a.signer.clone(),
        };
        ActPattern::new(signer, a.payload.substitute(&self_sub)).rename_with(map, fresh)
    };
    let pre = sub(&rule.pre, &mut map, fresh);
    let input = rule.input.as_ref().map(|a| act(a, &mut map, fresh));
    let output = rule.output.as_ref().map(|a| act(a, &mut map, fresh));
    let spawn = rule.spawn.as_ref().map(|s| crate::program::Spawn {
        agent: s.agent.as_ref().map(|a| sub(a, &mut map, fresh)),
        state: sub(&s.state, &mut map, fresh),
    });
    let post = sub(&rule.post, &mut map, fresh);
    let conditions = rule.conditions.iter().map(|c| c.map_terms(&mut |t| sub(t, &mut map, fresh))).collect();
    Rule { pre, input, output, spawn, post, conditions, origin: rule.origin, reactive: rule.reactive }
}

/// Post-state with produced variables replaced by the expressions producing
/// them, so that `agent(Balance')` becomes `agent(Balance-X)`.
fn symbolic_post(rule: &Rule) -> Term {
    let mut defs = Subst::new();
    for c in &rule.conditions {
        match c {
            Condition::Assign { var, expr } => defs.bind(var.clone(), expr.substitute(&defs)),
            Condition::ListOp { op, elem, list, result } => defs.bind(
                result.clone(),
                Term::app(&format!("${}", op.name()), vec![elem.substitute(&defs), list.substitute(&defs)]),
            ),
            _ => {}
        }
    }
    rule.post.substitute(&defs)
}

/// A numeric bound and whether it is strict.
type Bound = (crate::decimal::Decimal, bool);

/// A rule index with one ground (act, post-state) instance of it.
type GroundInstance = (usize, Option<(Term, Term)>, Term);

/// Conservative unsatisfiability test for a conjunction of conditions under
/// `theta`: only reports `true` when a contradiction is certain.
fn provably_unsat(conds: &[Condition], theta: &Subst) -> bool {
    let mut defs = theta.clone();
    for c in conds {
        if let Condition::Assign { var, expr } = c {
            let e = expr.substitute(&defs);
            defs.bind(var.clone(), e);
        }
    }
    // Per-variable numeric bounds: (lower, lower_strict, upper, upper_strict).
    let mut bounds: HashMap<Term, (Option<Bound>, Option<Bound>)> = HashMap::new();
    for c in conds {
        let Condition::Compare { op, lhs, rhs } = c else { continue };
        let (l, r) = (eval::simplify(&lhs.substitute(&defs)), eval::simplify(&rhs.substitute(&defs)));
        if l.is_ground() && r.is_ground() {
            if let Ok(false) = eval::compare(*op, &l, &r) {
                return true;
            }
            continue;
        }
        match op {
            CmpOp::Ne if l == r => return true,
            CmpOp::Eq if crate::term::unify(&l, &r).is_none() => return true,
            CmpOp::Lt | CmpOp::Le if l == r && *op == CmpOp::Lt => return true,
            CmpOp::Gt if l == r => return true,
            _ => {}
        }
        let (subject, bound, op) = match (l.as_num(), r.as_num()) {
            (None, Some(n)) => (l.clone(), n.clone(), *op),
            (Some(n), None) => (r.clone(), n.clone(), flip(*op)),
            _ => continue,
        };
        let entry = bounds.entry(subject).or_insert((None, None));
        let tighten_low = |cur: &mut Option<(crate::decimal::Decimal, bool)>, v: crate::decimal::Decimal, strict: bool| {
            let better = match cur {
                None => true,
                Some((c, s)) => v > *c || (v == *c && strict && !*s),
            };
            if better {
                *cur = Some((v, strict));
            }
        };
        let tighten_high = |cur: &mut Option<(crate::decimal::Decimal, bool)>, v: crate::decimal::Decimal, strict: bool| {
            let better = match cur {
                None => true,
                Some((c, s)) => v < *c || (v == *c && strict && !*s),
            };
            if better {
                *cur = Some((v, strict));
            }
        };
        match op {
            CmpOp::Gt => tighten_low(&mut entry.0, bound, true),
            CmpOp::Ge => tighten_low(&mut entry.0, bound, false),
            CmpOp::Lt => tighten_high(&mut entry.1, bound, true),
            CmpOp::Le => tighten_high(&mut entry.1, bound, false),
            CmpOp::Eq => {
                tighten_low(&mut entry.0, bound.clone(), false);
                tighten_high(&mut entry.1, bound, false);
            }
            CmpOp::Ne => {}
        }
    }
    bounds.values().any(|(lo, hi)| match (lo, hi) {
        (Some((l, ls)), Some((h, hs))) => l > h || (l == h && (*ls || *hs)),
        _ => false,
    })
}

fn flip(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Ge => CmpOp::Le,
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Le => CmpOp::Ge,
        other => other,
    }
}

/// Checks one ordered pair of rules; `a` and `b` may be the same rule.
fn nd_pair(a: &Rule, b: &Rule, fresh: &mut Fresh) -> Option<NdWitness> {
    let (a, b) = (rename_rule(a, fresh), rename_rule(b, fresh));
    let (pre_a, act_a) = nd_key(&a, fresh);
    let (pre_b, act_b) = nd_key(&b, fresh);
    let degenerate = act_a.is_none() || act_b.is_none();
    let mut theta = Subst::new();
    if !unify_into(&pre_a, &pre_b, &mut theta) {
        return None;
    }
    if !degenerate {
        let (Some(x), Some(y)) = (&act_a, &act_b) else { unreachable!() };
        if !unify_into(x, y, &mut theta) {
            return None;
        }
    }
    let theta = theta.normalized();
    let post1 = eval::simplify(&symbolic_post(&a).substitute(&theta));
    let post2 = eval::simplify(&symbolic_post(&b).substitute(&theta));
    if post1 == post2 {
        return None;
    }
    let conds: Vec<Condition> = a.conditions.iter().chain(b.conditions.iter()).cloned().collect();
    if provably_unsat(&conds, &theta) {
        return None;
    }
    Some(NdWitness { theta, post1, post2 })
}

/// Reports every pair of rules (including a rule with itself) whose keys
/// unify while their post-states differ. `rules` should be desugared and
/// signature-inserted.
pub fn check_explicit_nd(rules: &[Rule]) -> Vec<Violation> {
    let mut fresh = Fresh::new();
    let mut out = Vec::new();
    for i in 0..rules.len() {
        for j in i..rules.len() {
            if rules[i].pre.functor() != rules[j].pre.functor() {
                continue;
            }
            if let Some(w) = nd_pair(&rules[i], &rules[j], &mut fresh) {
                let message = if i == j {
                    format!("rule `{}` can reach different post-states with the same act ({} vs {})", rules[i], w.post1, w.post2)
                } else {
                    format!(
                        "rules at {} and {} overlap under {} but lead to {} vs {}",
                        rules[i].origin, rules[j].origin, w.theta, w.post1, w.post2
                    )
                };
                let mut v = Violation::new(ViolationKind::ExplicitND, message, vec![rules[i].origin, rules[j].origin]);
                v.witness = Some(w);
                out.push(v);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Role validation

/// Checks init rules, role references and condition variable binding.
pub fn validate_roles(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    let role_names: HashSet<&str> = program.roles.iter().map(|r| &*r.name).collect();

    // Every place an agent is started, with whether its state is parameterized.
    let mut starts: Vec<(&Term, Span)> = program.activation.iter().map(|a| (&a.state, a.origin)).collect();
    for r in program.rules() {
        if let Some(s) = &r.spawn {
            starts.push((&s.state, r.origin));
        }
    }
    for (state, span) in &starts {
        let Some((f, _)) = state.functor() else { continue };
        if !role_names.contains(f) {
            out.push(Violation::new(ViolationKind::UnknownRole, format!("no role program for `{f}` (state `{state}`)"), vec![*span]));
        }
    }

    for role in &program.roles {
        let has_init = role.rules.iter().any(|r| r.pre.as_name() == Some(&*role.name));
        if has_init {
            continue;
        }
        let refs: Vec<&Term> = starts.iter().filter(|(s, _)| s.functor().map(|f| f.0) == Some(&*role.name)).map(|(s, _)| *s).collect();
        let only_parameterized = !refs.is_empty() && refs.iter().all(|s| s.functor().map(|f| f.1).unwrap_or(0) > 0);
        if !only_parameterized {
            let span = role.rules.first().map(|r| r.origin).unwrap_or_default();
            out.push(Violation::new(
                ViolationKind::MissingInitRule,
                format!("role `{}` has no rule with the 0-ary pre-state `{}`", role.name, role.name),
                vec![span],
            ));
        }
    }

    for rule in program.rules() {
        let mut bound: Vec<Sym> = rule.lhs_vars();
        bound.push(SELF_VAR.into());
        if let Some(o) = &rule.output {
            o.collect_vars(&mut bound);
        }
        if let Some(s) = &rule.spawn {
            if let Some(a) = &s.agent {
                a.collect_vars(&mut bound);
            }
        }
        for c in &rule.conditions {
            for v in c.inputs() {
                if !bound.contains(&v) {
                    out.push(Violation::new(
                        ViolationKind::UnboundConditionVar,
                        format!("condition `{c}` reads `{v}`, which nothing binds before it"),
                        vec![rule.origin],
                    ));
                }
            }
            bound.extend(c.target().cloned());
        }
        let mut rest = Vec::new();
        if let Some(s) = &rule.spawn {
            s.state.collect_vars(&mut rest);
        }
        rule.post.collect_vars(&mut rest);
        for v in rest {
            if !bound.contains(&v) {
                out.push(Violation::new(
                    ViolationKind::UnboundConditionVar,
                    format!("`{v}` in the post-state of `{rule}` is never bound"),
                    vec![rule.origin],
                ));
            }
        }
    }
    out
}

/// Runs every pass and indexes the result.
pub fn check(program: Program) -> CheckedProgram {
    let mut fresh = FreshNames::for_program(&program);
    let roles: Vec<RoleProgram> =
        program.roles.iter().map(|r| insert_signatures(&desugar_combined(r, &mut fresh))).collect();
    let program = Program { activation: program.activation, roles };
    let mut diagnostics = validate_roles(&program);
    let rules: Vec<Rule> = program.rules().cloned().collect();
    diagnostics.extend(check_explicit_nd(&rules));
    diagnostics.sort_by_key(|d| d.span());

    let mut index: HashMap<(Sym, usize), Vec<usize>> = HashMap::new();
    for (i, r) in rules.iter().enumerate() {
        if let Some((f, n)) = r.pre.functor() {
            index.entry((f.into(), n)).or_default().push(i);
        }
    }
    CheckedProgram { program, diagnostics, rules, index }
}

// ---------------------------------------------------------------------------
// Ground instances and the brute-force cross-check

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StaticError {
    #[error("grounding would produce {needed} instances (cap {cap})")]
    UniverseTooLarge { needed: u128, cap: usize },
}

/// All ground instances of `rule` over `universe`: every variable is
/// replaced by every universe term. Bind `Self` beforehand with
/// [`substitute_rule`] when a particular agent is meant.
pub fn ground_instances(rule: &Rule, universe: &[Term], cap: usize) -> Result<Vec<Rule>, StaticError> {
    let vars = rule.vars();
    let needed = (universe.len() as u128).checked_pow(vars.len() as u32).unwrap_or(u128::MAX);
    if needed > cap as u128 {
        return Err(StaticError::UniverseTooLarge { needed, cap });
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for theta in assignments(&vars, universe) {
        let inst = substitute_rule(rule, &theta);
        if seen.insert(inst.clone()) {
            out.push(inst);
        }
    }
    Ok(out)
}

fn assignments(vars: &[Sym], universe: &[Term]) -> impl Iterator<Item = Subst> {
    let total = if vars.is_empty() { 1 } else { universe.len().pow(vars.len() as u32) };
    let vars = vars.to_vec();
    let universe = universe.to_vec();
    (0..total).map(move |mut k| {
        let mut theta = Subst::new();
        for v in &vars {
            theta.bind(v.clone(), universe[k % universe.len()].clone());
            k /= universe.len();
        }
        theta
    })
}

/// Applies `theta` to every part of a rule, including act signers.
pub fn substitute_rule(rule: &Rule, theta: &Subst) -> Rule {
    Rule {
        pre: rule.pre.substitute(theta),
        input: rule.input.as_ref().map(|a| a.substitute(theta)),
        output: rule.output.as_ref().map(|a| a.substitute(theta)),
        spawn: rule.spawn.as_ref().map(|s| crate::program::Spawn {
            agent: s.agent.as_ref().map(|a| a.substitute(theta)),
            state: s.state.substitute(theta),
        }),
        post: rule.post.substitute(theta),
        conditions: rule.conditions.iter().map(|c| c.map_terms(&mut |t| t.substitute(theta))).collect(),
        origin: rule.origin,
        reactive: rule.reactive,
    }
}

/// A ground transition instance: `(pre, act, post)` with `act = None` for
/// silent rules.
type Instance = (Term, Option<(Term, Term)>, Term);

/// Enumerates the ground transitions of one rule over `universe`, evaluating
/// conditions (produced variables are computed rather than enumerated, and
/// choices are expanded).
fn rule_instances(rule: &Rule, universe: &[Term], cap: usize) -> Result<Vec<Instance>, StaticError> {
    let self_sub = Subst::new().with(SELF_VAR, Term::name(SELF_CONST));
    let mut rule = substitute_rule(rule, &self_sub);
    if let Some(o) = &mut rule.output {
        o.signer = Signer::Name(SELF_CONST.into());
    }
    let autonomous_name: Sym = "$new".into();
    let produced: HashSet<Sym> = rule.conditions.iter().filter_map(|c| c.target().cloned()).collect();
    let mut free: Vec<Sym> = rule.vars().into_iter().filter(|v| !produced.contains(v)).collect();
    let wildcard_signer: Sym = "$signer".into();
    if matches!(rule.input.as_ref().map(|i| &i.signer), Some(Signer::Wildcard)) {
        free.push(wildcard_signer.clone());
    }
    let needed = (universe.len() as u128).checked_pow(free.len() as u32).unwrap_or(u128::MAX);
    if needed > cap as u128 {
        return Err(StaticError::UniverseTooLarge { needed, cap });
    }
    let mut out = Vec::new();
    for theta in assignments(&free, universe) {
        let mut pending = vec![theta];
        while let Some(theta) = pending.pop() {
            match eval::eval_conditions(&rule.conditions, &theta) {
                Ok(CondOutcome::Satisfied(full)) => {
                    let pre = eval::simplify(&rule.pre.substitute(&full));
                    let post = eval::simplify(&rule.post.substitute(&full));
                    let act = match rule.kind() {
                        RuleKind::Silent => None,
                        RuleKind::Input | RuleKind::Combined => {
                            let i = rule.input.as_ref().expect("input");
                            let signer = match &i.signer {
                                Signer::Wildcard => full.get(&wildcard_signer).cloned().expect("bound"),
                                Signer::Name(n) => Term::Name(n.clone()),
                                Signer::Var(v) => full.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone())),
                            };
                            Some((Term::app("in", vec![signer]), eval::simplify(&i.payload.substitute(&full))))
                        }
                        RuleKind::Output => {
                            let mut f = Fresh::new();
                            let payload = emitted_payload(&rule, &mut f).expect("output");
                            let payload = payload.substitute(&full);
                            // An autonomous spawn's generated id is one fixed name.
                            let payload = payload.substitute(
                                &payload.vars().into_iter().map(|v| (v, Term::Name(autonomous_name.clone()))).collect(),
                            );
                            Some((Term::name("out"), eval::simplify(&payload)))
                        }
                    };
                    if pre.is_ground() && post.is_ground() {
                        out.push((pre, act, post));
                    }
                }
                Ok(CondOutcome::NeedsChoice { var, options }) => {
                    for o in options {
                        pending.push(theta.clone().with(&var, o));
                    }
                }
                Ok(CondOutcome::Failed) | Err(_) => {}
            }
        }
    }
    Ok(out)
}

/// Brute-force explicit-nondeterminism check: enumerates ground instances of
/// every rule over `universe` and reports each pair of rule indices (i <= j)
/// that has two instances with the same pre-state, differing post-states, and
/// either the same act or a silent rule involved.
pub fn brute_force_nd(rules: &[Rule], universe: &[Term], cap: usize) -> Result<BTreeSet<(usize, usize)>, StaticError> {
    let mut by_pre: HashMap<Term, Vec<GroundInstance>> = HashMap::new();
    for (i, r) in rules.iter().enumerate() {
        for (pre, act, post) in rule_instances(r, universe, cap)? {
            by_pre.entry(pre).or_default().push((i, act, post));
        }
    }
    let mut pairs = BTreeSet::new();
    for insts in by_pre.values() {
        for (x, (i, act_i, post_i)) in insts.iter().enumerate() {
            for (j, act_j, post_j) in &insts[x..] {
                if post_i == post_j {
                    continue;
                }
                let clash = act_i.is_none() || act_j.is_none() || act_i == act_j;
                if clash {
                    pairs.insert((*i.min(j), *i.max(j)));
                }
            }
        }
    }
    Ok(pairs)
}

/// The default brute-force universe for a rule set: three fresh constants,
/// the numbers 0 and 1, the empty list, and every name occurring in the rules.
pub fn default_universe(rules: &[Rule]) -> Vec<Term> {
    let mut set: BTreeSet<Term> = ["c1", "c2", "c3"].into_iter().map(Term::name).collect();
    set.insert(Term::int(0));
    set.insert(Term::int(1));
    set.insert(Term::nil());
    let mut add = |t: &Term| {
        fn walk(t: &Term, set: &mut BTreeSet<Term>) {
            match t {
                Term::Name(n) if !n.starts_with('$') => {
                    set.insert(t.clone());
                }
                Term::Num(_) => {
                    set.insert(t.clone());
                }
                Term::Compound(f, args) if !matches!(&**f, "+" | "-" | "*" | ".") => {
                    args.iter().for_each(|a| walk(a, set))
                }
                Term::Compound(_, args) => args.iter().for_each(|a| walk(a, set)),
                _ => {}
            }
        }
        walk(t, &mut set);
    };
    for r in rules {
        // Argument constants only: state functors themselves are not values.
        r.pre.args().iter().for_each(&mut add);
        r.post.args().iter().for_each(&mut add);
        for a in r.input.iter().chain(r.output.iter()) {
            add(&a.payload);
        }
        for c in &r.conditions {
            c.map_terms(&mut |t| {
                add(t);
                t.clone()
            });
        }
    }
    set.into_iter().collect()
}
