//! Logic terms, substitutions, one-way matching and unification.
//!
//! Terms are immutable and cheap to clone (names are shared `Arc<str>`s and
//! argument lists are shared slices), so every other layer passes them around
//! by value.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use crate::decimal::Decimal;

pub type Sym = Arc<str>;

/// Functor of a list cell `[H|T]`.
pub const CONS: &str = ".";
/// The empty list.
pub const NIL: &str = "[]";

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Sym),
    Name(Sym),
    Num(Decimal),
    /// Functor and at least one argument.
    Compound(Sym, Arc<[Term]>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.into())
    }

    pub fn name(name: &str) -> Term {
        Term::Name(name.into())
    }

    pub fn int(v: i64) -> Term {
        Term::Num(v.into())
    }

    /// Builds `functor(args...)`, collapsing to a bare name when `args` is empty.
    pub fn app(functor: &str, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::Name(functor.into())
        } else {
            Term::Compound(functor.into(), args.into())
        }
    }

    pub fn nil() -> Term {
        Term::name(NIL)
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::app(CONS, vec![head, tail])
    }

    /// `[a, b | tail]`.
    pub fn list_with_tail(items: impl IntoIterator<Item = Term, IntoIter: DoubleEndedIterator>, tail: Term) -> Term {
        items.into_iter().rev().fold(tail, |acc, item| Term::cons(item, acc))
    }

    pub fn list(items: impl IntoIterator<Item = Term, IntoIter: DoubleEndedIterator>) -> Term {
        Term::list_with_tail(items, Term::nil())
    }

    /// Elements of a proper list, or `None` for anything else.
    pub fn as_list(&self) -> Option<Vec<Term>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Term::Name(n) if &**n == NIL => return Some(out),
                Term::Compound(f, args) if &**f == CONS && args.len() == 2 => {
                    out.push(args[0].clone());
                    cur = &args[1];
                }
                _ => return None,
            }
        }
    }

    /// `(functor, arity)`; names are 0-ary. Variables and numbers have none.
    pub fn functor(&self) -> Option<(&str, usize)> {
        match self {
            Term::Name(n) => Some((n, 0)),
            Term::Compound(f, args) => Some((f, args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            Term::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<&Decimal> {
        match self {
            Term::Num(d) => Some(d),
            _ => None,
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::Name(_) | Term::Num(_) => true,
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
        }
    }

    /// Distinct variables in order of first occurrence.
    pub fn vars(&self) -> Vec<Sym> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut Vec<Sym>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }

    pub fn occurs(&self, var: &str) -> bool {
        match self {
            Term::Var(v) => &**v == var,
            Term::Compound(_, args) => args.iter().any(|a| a.occurs(var)),
            _ => false,
        }
    }

    /// Calls `f` on every name and functor symbol occurring in the term.
    pub fn for_each_symbol(&self, f: &mut impl FnMut(&str)) {
        match self {
            Term::Name(n) => f(n),
            Term::Compound(func, args) => {
                f(func);
                args.iter().for_each(|a| a.for_each_symbol(f));
            }
            _ => {}
        }
    }

    pub fn substitute(&self, theta: &Subst) -> Term {
        if theta.is_empty() {
            return self.clone();
        }
        match self {
            Term::Var(v) => theta.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| a.substitute(theta)).collect()),
            _ => self.clone(),
        }
    }

    /// Replaces variables through `map`, generating fresh names for new ones.
    pub fn rename_with(&self, map: &mut HashMap<Sym, Sym>, fresh: &mut Fresh) -> Term {
        match self {
            Term::Var(v) => Term::Var(map.entry(v.clone()).or_insert_with(|| fresh.next_var()).clone()),
            Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| a.rename_with(map, fresh)).collect()),
            _ => self.clone(),
        }
    }
}

/// Source of variable names that have never been produced before.
///
/// Names start with `_V`, which the parser never generates for anonymous
/// variables, so renamed terms cannot capture source variables unless the
/// source itself spells `_V<n>`.
#[derive(Debug, Default, Clone)]
pub struct Fresh {
    next: u64,
}

impl Fresh {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_var(&mut self) -> Sym {
        self.next += 1;
        format!("_V{}", self.next).into()
    }
}

/// Consistently renames every variable of `t` apart from everything seen so far.
pub fn rename_fresh(t: &Term, fresh: &mut Fresh) -> Term {
    t.rename_with(&mut HashMap::new(), fresh)
}

/// A finite map from variables to terms.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Subst(BTreeMap<Sym, Term>);

impl Subst {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, var: &str) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.0.contains_key(var)
    }

    /// Adds a binding. Self-bindings are dropped to keep the map canonical.
    pub fn bind(&mut self, var: Sym, value: Term) {
        if matches!(&value, Term::Var(v) if *v == var) {
            return;
        }
        self.0.insert(var, value);
    }

    pub fn remove(&mut self, var: &str) -> Option<Term> {
        self.0.remove(var)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &Term)> {
        self.0.iter()
    }

    pub fn with(mut self, var: &str, value: Term) -> Self {
        self.bind(var.into(), value);
        self
    }

    /// Follows variable-to-variable/term chains until reaching an unbound
    /// variable or a non-variable term (without descending into arguments).
    fn walk<'a>(&'a self, t: &'a Term) -> &'a Term {
        let mut cur = t;
        while let Term::Var(v) = cur {
            match self.0.get(v) {
                Some(next) => cur = next,
                None => break,
            }
        }
        cur
    }

    /// Fully dereferences `t` through a triangular substitution.
    fn resolve(&self, t: &Term) -> Term {
        match self.walk(t) {
            Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(|a| self.resolve(a)).collect()),
            other => other.clone(),
        }
    }

    /// Rewrites the map so every right-hand side is fully resolved, making
    /// application idempotent.
    pub fn normalized(&self) -> Subst {
        let mut out = Subst::new();
        for k in self.0.keys() {
            out.bind(k.clone(), self.resolve(&Term::Var(k.clone())));
        }
        out
    }
}

impl FromIterator<(Sym, Term)> for Subst {
    fn from_iter<I: IntoIterator<Item = (Sym, Term)>>(iter: I) -> Self {
        let mut s = Subst::new();
        for (k, v) in iter {
            s.bind(k, v);
        }
        s
    }
}

impl fmt::Debug for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}↦{v}")?;
        }
        f.write_str("}")
    }
}

/// One-way matching: extends `theta` so that `pattern θ == value`.
///
/// `value` is expected to be ground; variables occurring in it are treated as
/// opaque constants. On failure `theta` may contain partial bindings, so
/// callers match into a scratch copy.
pub fn match_into(pattern: &Term, value: &Term, theta: &mut Subst) -> bool {
    match (pattern, value) {
        (Term::Var(v), _) => match theta.get(v) {
            Some(bound) => bound == value,
            None => {
                theta.bind(v.clone(), value.clone());
                true
            }
        },
        (Term::Compound(f, pa), Term::Compound(g, va)) => {
            f == g && pa.len() == va.len() && pa.iter().zip(va.iter()).all(|(p, v)| match_into(p, v, theta))
        }
        _ => pattern == value,
    }
}

/// Matches `pattern` against `value` from an empty substitution.
pub fn match_term(pattern: &Term, value: &Term) -> Option<Subst> {
    let mut theta = Subst::new();
    match_into(pattern, value, &mut theta).then_some(theta)
}

/// Most general unifier of `a` and `b`, with occurs check.
pub fn unify(a: &Term, b: &Term) -> Option<Subst> {
    let mut theta = Subst::new();
    unify_into(a, b, &mut theta).then(|| theta.normalized())
}

/// Extends a triangular substitution so that it also unifies `a` and `b`.
///
/// The result must be passed through [`Subst::normalized`] before being
/// applied with [`Term::substitute`].
pub fn unify_into(a: &Term, b: &Term, theta: &mut Subst) -> bool {
    let a = theta.walk(a).clone();
    let b = theta.walk(b).clone();
    match (&a, &b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if theta.resolve(t).occurs(x) {
                return false;
            }
            theta.bind(x.clone(), t.clone());
            true
        }
        (Term::Compound(f, xs), Term::Compound(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys.iter()).all(|(x, y)| unify_into(x, y, theta))
        }
        _ => a == b,
    }
}

/// Who signed (or may have signed) an act.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Signer {
    Var(Sym),
    Name(Sym),
    Wildcard,
}

/// A signed act pattern `v(A)`; the only place a variable may act as functor.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct ActPattern {
    pub signer: Signer,
    pub payload: Term,
}

impl ActPattern {
    pub fn new(signer: Signer, payload: Term) -> Self {
        ActPattern { signer, payload }
    }

    /// Treats a term written in act position: a unary compound `v(A)` is read
    /// as signer `v` with payload `A`; anything else is a bare payload.
    pub fn from_written(t: Term) -> Self {
        match &t {
            Term::Compound(f, args) if args.len() == 1 => ActPattern::new(Signer::Name(f.clone()), args[0].clone()),
            _ => ActPattern::new(Signer::Wildcard, t),
        }
    }

    pub fn is_ground(&self) -> bool {
        matches!(self.signer, Signer::Name(_)) && self.payload.is_ground()
    }

    /// Signer and payload folded into one term (`v(A)`), with wildcards
    /// becoming fresh variables; used wherever acts take part in unification.
    pub fn to_term(&self, fresh: &mut Fresh) -> Term {
        let signer = match &self.signer {
            Signer::Var(v) => Term::Var(v.clone()),
            Signer::Name(n) => Term::Name(n.clone()),
            Signer::Wildcard => Term::Var(fresh.next_var()),
        };
        Term::app("$act", vec![signer, self.payload.clone()])
    }

    pub fn substitute(&self, theta: &Subst) -> ActPattern {
        let signer = match &self.signer {
            Signer::Var(v) => match theta.get(v) {
                Some(Term::Name(n)) => Signer::Name(n.clone()),
                Some(Term::Var(w)) => Signer::Var(w.clone()),
                _ => self.signer.clone(),
            },
            other => other.clone(),
        };
        ActPattern::new(signer, self.payload.substitute(theta))
    }

    pub fn collect_vars(&self, out: &mut Vec<Sym>) {
        if let Signer::Var(v) = &self.signer {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        self.payload.collect_vars(out);
    }

    pub fn rename_with(&self, map: &mut HashMap<Sym, Sym>, fresh: &mut Fresh) -> ActPattern {
        let signer = match &self.signer {
            Signer::Var(v) => Signer::Var(map.entry(v.clone()).or_insert_with(|| fresh.next_var()).clone()),
            other => other.clone(),
        };
        ActPattern::new(signer, self.payload.rename_with(map, fresh))
    }
}

/// Matches an act pattern against the ground act `signer(payload)`.
pub fn match_act_into(pattern: &ActPattern, signer: &str, payload: &Term, theta: &mut Subst) -> bool {
    let signer_ok = match &pattern.signer {
        Signer::Wildcard => true,
        Signer::Name(n) => &**n == signer,
        Signer::Var(v) => match_into(&Term::Var(v.clone()), &Term::name(signer), theta),
    };
    signer_ok && match_into(&pattern.payload, payload, theta)
}

pub fn match_act(pattern: &ActPattern, signer: &str, payload: &Term) -> Option<Subst> {
    let mut theta = Subst::new();
    match_act_into(pattern, signer, payload, &mut theta).then_some(theta)
}

// ---------------------------------------------------------------------------
// Canonical rendering

/// Whether `s` can be written as a bare (unquoted) name.
pub fn is_bare_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => chars.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => s == NIL,
    }
}

fn write_name(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_bare_name(s) {
        return f.write_str(s);
    }
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

fn arith_prec(t: &Term) -> Option<u8> {
    match t {
        Term::Compound(op, args) if args.len() == 2 => match &**op {
            "+" | "-" => Some(1),
            "*" => Some(2),
            _ => None,
        },
        _ => None,
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, t: &Term, min_prec: u8) -> fmt::Result {
    match arith_prec(t) {
        Some(p) if p < min_prec => write!(f, "({t})"),
        _ => write!(f, "{t}"),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Name(n) => write_name(f, n),
            Term::Num(d) => write!(f, "{d}"),
            Term::Compound(func, args) if &**func == CONS && args.len() == 2 => {
                f.write_str("[")?;
                write!(f, "{}", args[0])?;
                let mut tail = &args[1];
                loop {
                    match tail {
                        Term::Compound(g, more) if &**g == CONS && more.len() == 2 => {
                            write!(f, ",{}", more[0])?;
                            tail = &more[1];
                        }
                        Term::Name(n) if &**n == NIL => break,
                        other => {
                            write!(f, "|{other}")?;
                            break;
                        }
                    }
                }
                f.write_str("]")
            }
            Term::Compound(op, args) if arith_prec(self).is_some() => {
                let p = arith_prec(self).unwrap_or(0);
                write_operand(f, &args[0], p)?;
                f.write_str(op)?;
                // Right operands of equal precedence need parentheses: a-(b-c).
                write_operand(f, &args[1], p + 1)
            }
            Term::Compound(func, args) => {
                write_name(f, func)?;
                f.write_str("(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ActPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.signer {
            Signer::Var(v) => write!(f, "{v}({})", self.payload),
            Signer::Name(n) => {
                write_name(f, n)?;
                write!(f, "({})", self.payload)
            }
            Signer::Wildcard => write!(f, "{}", self.payload),
        }
    }
}
