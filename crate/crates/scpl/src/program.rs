//! Parsed contract structure: rules, conditions, roles and the activation.

use std::fmt;

use crate::term::{ActPattern, Signer, Sym, Term};

/// Source position (1-based line and column).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "=<",
            CmpOp::Eq => "=",
            CmpOp::Ne => "=\\=",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ListOpKind {
    AppendElem,
    RemoveElem,
}

impl ListOpKind {
    pub fn name(self) -> &'static str {
        match self {
            ListOpKind::AppendElem => "append_elem",
            ListOpKind::RemoveElem => "remove_elem",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    /// `Var := expr`
    Assign { var: Sym, expr: Term },
    /// `Var := e1, e2, or e3` — the value is picked by the oracle.
    AssignChoice { var: Sym, options: Vec<Term> },
    Compare { op: CmpOp, lhs: Term, rhs: Term },
    /// `append_elem(E, L, R)` appends E at the end of L; `remove_elem(E, L, R)`
    /// removes the first occurrence of E from L (failing if absent).
    ListOp { op: ListOpKind, elem: Term, list: Term, result: Sym },
}

impl Condition {
    /// Variable produced by this condition, if any.
    pub fn target(&self) -> Option<&Sym> {
        match self {
            Condition::Assign { var, .. } | Condition::AssignChoice { var, .. } => Some(var),
            Condition::ListOp { result, .. } => Some(result),
            Condition::Compare { .. } => None,
        }
    }

    /// Variables this condition reads.
    pub fn inputs(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        match self {
            Condition::Assign { expr, .. } => expr.collect_vars(&mut out),
            Condition::AssignChoice { options, .. } => options.iter().for_each(|o| o.collect_vars(&mut out)),
            Condition::Compare { lhs, rhs, .. } => {
                lhs.collect_vars(&mut out);
                rhs.collect_vars(&mut out);
            }
            Condition::ListOp { elem, list, .. } => {
                elem.collect_vars(&mut out);
                list.collect_vars(&mut out);
            }
        }
        out
    }

    pub fn collect_vars(&self, out: &mut Vec<Sym>) {
        for v in self.inputs().into_iter().chain(self.target().cloned()) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
    }

    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Term) -> Condition {
        let var = |v: &Sym, f: &mut dyn FnMut(&Term) -> Term| match f(&Term::Var(v.clone())) {
            Term::Var(w) => w,
            // A produced variable bound elsewhere stays a variable name.
            _ => v.clone(),
        };
        match self {
            Condition::Assign { var: v, expr } => Condition::Assign { var: var(v, f), expr: f(expr) },
            Condition::AssignChoice { var: v, options } => {
                Condition::AssignChoice { var: var(v, f), options: options.iter().map(&mut *f).collect() }
            }
            Condition::Compare { op, lhs, rhs } => Condition::Compare { op: *op, lhs: f(lhs), rhs: f(rhs) },
            Condition::ListOp { op, elem, list, result } => {
                Condition::ListOp { op: *op, elem: f(elem), list: f(list), result: var(result, f) }
            }
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Assign { var, expr } => write!(f, "{var} := {expr}"),
            Condition::AssignChoice { var, options } => {
                write!(f, "{var} := ")?;
                for (i, o) in options.iter().enumerate() {
                    match i {
                        0 => write!(f, "{o}")?,
                        _ if i + 1 == options.len() => write!(f, ", or {o}")?,
                        _ => write!(f, ", {o}")?,
                    }
                }
                Ok(())
            }
            Condition::Compare { op, lhs, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            Condition::ListOp { op, elem, list, result } => write!(f, "{}({elem}, {list}, {result})", op.name()),
        }
    }
}

/// Agent-creation element `Name#State` on a rule's right-hand side.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Spawn {
    /// Variable or name of the new agent; `None` for `autonomous#...`, which
    /// asks the runtime to generate a fresh id.
    pub agent: Option<Term>,
    pub state: Term,
}

impl Spawn {
    pub fn is_autonomous(&self) -> bool {
        self.agent.is_none()
    }
}

impl fmt::Display for Spawn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.agent {
            Some(a) => write!(f, "{a}#{}", self.state),
            None => write!(f, "autonomous#{}", self.state),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Input,
    Output,
    Combined,
    Silent,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub pre: Term,
    pub input: Option<ActPattern>,
    /// Output act. Before signature insertion its signer is a wildcard.
    pub output: Option<ActPattern>,
    pub spawn: Option<Spawn>,
    pub post: Term,
    pub conditions: Vec<Condition>,
    pub origin: Span,
    /// Set on the output half of a desugared combined rule and on `:-`
    /// continuation clauses: the state exists only to produce the response,
    /// so the agent accepts no input until it has responded.
    pub reactive: bool,
}

impl Rule {
    pub fn kind(&self) -> RuleKind {
        match (self.input.is_some(), self.is_output()) {
            (true, true) => RuleKind::Combined,
            (true, false) => RuleKind::Input,
            (false, true) => RuleKind::Output,
            (false, false) => RuleKind::Silent,
        }
    }

    /// Output rules emit an act; a spawn emits the synthetic `activated` act.
    pub fn is_output(&self) -> bool {
        self.output.is_some() || self.spawn.is_some()
    }

    /// Variables in order of first occurrence across the whole rule.
    pub fn vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.pre.collect_vars(&mut out);
        if let Some(i) = &self.input {
            i.collect_vars(&mut out);
        }
        self.rhs_vars_into(&mut out);
        self.conditions.iter().for_each(|c| c.collect_vars(&mut out));
        out
    }

    pub fn lhs_vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.pre.collect_vars(&mut out);
        if let Some(i) = &self.input {
            i.collect_vars(&mut out);
        }
        out
    }

    pub fn rhs_vars_into(&self, out: &mut Vec<Sym>) {
        if let Some(o) = &self.output {
            o.collect_vars(out);
        }
        if let Some(s) = &self.spawn {
            if let Some(a) = &s.agent {
                a.collect_vars(out);
            }
            s.state.collect_vars(out);
        }
        self.post.collect_vars(out);
    }

    pub fn is_stop(&self) -> bool {
        self.post.as_name() == Some("stop")
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.pre)?;
        if let Some(i) = &self.input {
            write!(f, ", {i}")?;
        }
        f.write_str(" --> ")?;
        if let Some(o) = &self.output {
            write!(f, "{o}, ")?;
        }
        if let Some(s) = &self.spawn {
            write!(f, "{s}, ")?;
        }
        write!(f, "{}", self.post)?;
        for (i, c) in self.conditions.iter().enumerate() {
            f.write_str(if i == 0 { " where " } else { " & " })?;
            write!(f, "{c}")?;
        }
        f.write_str(".")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleProgram {
    pub name: Sym,
    pub rules: Vec<Rule>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Activation {
    pub agent: Sym,
    pub state: Term,
    pub origin: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub activation: Vec<Activation>,
    pub roles: Vec<RoleProgram>,
}

impl Program {
    pub fn role(&self, name: &str) -> Option<&RoleProgram> {
        self.roles.iter().find(|r| &*r.name == name)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.roles.iter().flat_map(|r| r.rules.iter())
    }

    pub fn rule_count(&self) -> usize {
        self.roles.iter().map(|r| r.rules.len()).sum()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.activation.is_empty() {
            f.write_str("activation [")?;
            for (i, a) in self.activation.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}#{}", a.agent, a.state)?;
            }
            f.write_str("].\n")?;
        }
        for role in &self.roles {
            f.write_str("\n")?;
            for r in &role.rules {
                writeln!(f, "{r}")?;
            }
        }
        Ok(())
    }
}

/// The variable every agent binds to its own name.
pub const SELF_VAR: &str = "Self";

pub fn self_signed(payload: Term) -> ActPattern {
    ActPattern::new(Signer::Var(SELF_VAR.into()), payload)
}
