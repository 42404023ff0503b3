//! Recursive-descent parser for `.scpl` sources.
//!
//! The grammar is newline-insensitive: a source is a sequence of clauses each
//! terminated by `.`, with `%` starting a comment that runs to end of line.
//!
//! ```text
//! clause     := "activation" list "." | rule
//! rule       := lhs ("-->" | ":-") rhs ["where" conditions] "."
//! lhs        := expr ["," expr]              % pre-state [, input act]
//! rhs        := item ("," item)*             % [act,] [spawn,] post-state
//! item       := expr ["#" expr]
//! conditions := cond (("&" | ",") cond)*
//! cond       := Var ":=" expr (("," | "or") expr)*   % `or` makes a choice
//!             | expr cmp expr
//!             | ("append_elem" | "remove_elem") "(" expr "," expr "," Var ")"
//! ```

use std::collections::{BTreeSet, HashSet};

use crate::decimal::Decimal;
use crate::program::{Activation, CmpOp, Condition, ListOpKind, Program, RoleProgram, Rule, Span, Spawn};
use crate::term::{ActPattern, Signer, Sym, Term};

/// Internal functor marking a variable-functor term `V(A)` while parsing.
const SIGNED: &str = "$signed";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String, expected: Vec<String> },
    #[error("{span}: duplicate agent `{agent}` in activation")]
    DuplicateAgent { span: Span, agent: String },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. } | ParseError::DuplicateAgent { span, .. } => *span,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name(String),
    /// Quoted string; always a name, never a keyword.
    Quoted(String),
    Var(String),
    Num(Decimal),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Name(n) => format!("`{n}`"),
            Tok::Quoted(s) => format!("string \"{s}\""),
            Tok::Var(v) => format!("variable `{v}`"),
            Tok::Num(d) => format!("number `{d}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

// Longest first so that `-->` wins over `-`, `=\=` over `=`.
const PUNCT: &[&str] = &[
    "-->", "=\\=", ":-", ":=", ">=", "=<", "(", ")", "[", "]", "|", ",", ".", "#", "&", ">", "<", "=", "+", "-", "*",
];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, to: usize| {
        while *i < to {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c.is_whitespace() {
            let to = i + 1;
            advance(&mut i, &mut line, &mut col, to);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                let to = i + 1;
            advance(&mut i, &mut line, &mut col, to);
            }
            continue;
        }
        let take_while = |start: usize, pred: &dyn Fn(char) -> bool| {
            let mut j = start;
            while j < chars.len() && pred(chars[j]) {
                j += 1;
            }
            j
        };
        let ident = |ch: char| ch.is_alphanumeric() || ch == '_';
        if c.is_lowercase() {
            let j = take_while(i, &ident);
            out.push((Tok::Name(chars[i..j].iter().collect()), span));
            advance(&mut i, &mut line, &mut col, j);
        } else if c.is_uppercase() || c == '_' {
            let mut j = take_while(i, &ident);
            // Primed variables (`Balance'`) name the next value of a variable.
            j = take_while(j, &|ch| ch == '\'');
            out.push((Tok::Var(chars[i..j].iter().collect()), span));
            advance(&mut i, &mut line, &mut col, j);
        } else if c.is_ascii_digit() {
            let mut j = take_while(i, &|ch| ch.is_ascii_digit());
            if j + 1 < chars.len() && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
                j = take_while(j + 1, &|ch| ch.is_ascii_digit());
            }
            let text: String = chars[i..j].iter().collect();
            let value = text.parse().map_err(|_| syntax(span, format!("bad number `{text}`"), vec![]))?;
            out.push((Tok::Num(value), span));
            advance(&mut i, &mut line, &mut col, j);
        } else if c == '"' || c == '\'' {
            let quote = c;
            let mut j = i + 1;
            let mut s = String::new();
            loop {
                match chars.get(j) {
                    None => return Err(syntax(span, "unterminated quoted name".into(), vec![quote.to_string()])),
                    Some(&ch) if ch == quote => break,
                    Some('\\') => {
                        let esc = chars.get(j + 1).copied().ok_or_else(|| syntax(span, "unterminated escape".into(), vec![]))?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        j += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            out.push((Tok::Quoted(s), span));
            advance(&mut i, &mut line, &mut col, j + 1);
        } else if let Some(p) = PUNCT.iter().find(|p| chars[i..].starts_with(&p.chars().collect::<Vec<_>>())) {
            out.push((Tok::Punct(p), span));
            let to = i + p.chars().count();
            advance(&mut i, &mut line, &mut col, to);
        } else {
            return Err(syntax(span, format!("unexpected character `{c}`"), vec![]));
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

fn syntax(span: Span, message: String, expected: Vec<String>) -> ParseError {
    ParseError::Syntax { span, message, expected }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    anon: u64,
}

impl Parser {
    fn new(src: &str) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, pos: 0, anon: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == k)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        let found = self.peek().describe();
        let list = expected.join(", ");
        let message = if expected.len() == 1 {
            format!("expected {list}, found {found}")
        } else {
            format!("expected one of {list}, found {found}")
        };
        Err(syntax(self.span(), message, expected.iter().map(|s| s.to_string()).collect()))
    }

    fn expect(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.error(&[&format!("`{p}`")])
        }
    }

    fn fresh_anon(&mut self) -> Term {
        self.anon += 1;
        Term::Var(format!("_G{}", self.anon).into())
    }

    // -- terms and expressions -------------------------------------------

    fn expr(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.product()?;
        while self.is_punct("+") || self.is_punct("-") {
            let Tok::Punct(op) = self.bump() else { unreachable!() };
            let rhs = self.product()?;
            lhs = Term::app(op, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Term, ParseError> {
        let mut lhs = self.primary()?;
        while self.eat("*") {
            let rhs = self.primary()?;
            lhs = Term::app("*", vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn args(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut args = vec![self.expr()?];
        while self.eat(",") {
            args.push(self.expr()?);
        }
        self.expect(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Term, ParseError> {
        let span = self.span();
        match self.bump() {
            Tok::Name(n) | Tok::Quoted(n) => {
                if self.eat("(") {
                    Ok(Term::app(&n, self.args()?))
                } else {
                    Ok(Term::name(&n))
                }
            }
            Tok::Var(v) => {
                let var = if v == "_" { self.fresh_anon() } else { Term::var(&v) };
                if self.eat("(") {
                    let mut args = self.args()?;
                    if args.len() != 1 {
                        return Err(syntax(span, "a variable functor takes exactly one argument (`Signer(Act)`)".into(), vec![]));
                    }
                    Ok(Term::app(SIGNED, vec![var, args.remove(0)]))
                } else {
                    Ok(var)
                }
            }
            Tok::Num(d) => Ok(Term::Num(d)),
            Tok::Punct("-") => match self.bump() {
                Tok::Num(d) => Ok(Term::Num(d.neg())),
                _ => Err(syntax(span, "unary minus applies only to number literals".into(), vec!["number".into()])),
            },
            Tok::Punct("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Punct("[") => self.list_tail_after_open(),
            _ => {
                self.pos -= 1;
                self.error(&["term"])
            }
        }
    }

    fn list_tail_after_open(&mut self) -> Result<Term, ParseError> {
        if self.eat("]") {
            return Ok(Term::nil());
        }
        let mut items = vec![self.list_item()?];
        while self.eat(",") {
            items.push(self.list_item()?);
        }
        let tail = if self.eat("|") { self.expr()? } else { Term::nil() };
        self.expect("]")?;
        Ok(Term::list_with_tail(items, tail))
    }

    /// List elements may be `name#term` pairs (activation lists).
    fn list_item(&mut self) -> Result<Term, ParseError> {
        let e = self.expr()?;
        if self.eat("#") {
            let state = self.expr()?;
            return Ok(Term::app("#", vec![e, state]));
        }
        Ok(e)
    }

    // -- clauses -----------------------------------------------------------

    fn program(&mut self) -> Result<(Vec<Activation>, Vec<Rule>), ParseError> {
        let mut activation = None;
        let mut rules = Vec::new();
        while *self.peek() != Tok::Eof {
            if self.is_keyword("activation") && matches!(self.peek_at(1), Tok::Punct("[")) {
                let span = self.span();
                self.bump();
                if activation.is_some() {
                    return Err(syntax(span, "only one activation clause is allowed".into(), vec![]));
                }
                activation = Some(self.activation_list()?);
                self.expect(".")?;
            } else {
                rules.push(self.rule()?);
            }
        }
        Ok((activation.unwrap_or_default(), rules))
    }

    fn activation_list(&mut self) -> Result<Vec<Activation>, ParseError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        self.expect("[")?;
        if self.eat("]") {
            return Ok(out);
        }
        loop {
            let span = self.span();
            let agent = match self.bump() {
                Tok::Name(n) | Tok::Quoted(n) => n,
                _ => {
                    self.pos -= 1;
                    return self.error(&["agent name"]);
                }
            };
            if agent == "autonomous" {
                return Err(syntax(span, "`autonomous` is reserved for spawns inside rule bodies".into(), vec![]));
            }
            self.expect("#")?;
            let state_span = self.span();
            let state = self.expr()?;
            if state.functor().is_none() {
                return Err(syntax(state_span, "activation state must have a role name as functor".into(), vec![]));
            }
            if !seen.insert(agent.clone()) {
                return Err(ParseError::DuplicateAgent { span, agent });
            }
            out.push(Activation { agent: agent.into(), state, origin: span });
            if self.eat("]") {
                return Ok(out);
            }
            if !self.eat(",") {
                return self.error(&["`,`", "`]`"]);
            }
        }
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let origin = self.span();
        let pre = self.expr()?;
        check_plain(&pre, origin, "pre-state")?;
        let input = if self.eat(",") {
            let span = self.span();
            let written = self.expr()?;
            Some(to_input_act(written, span)?)
        } else {
            None
        };
        // A `:-` clause defines how an auxiliary state continues; like the
        // output half of a combined rule it is a response, not a new initiative.
        let continuation = self.eat(":-");
        if !(continuation || self.eat("-->")) {
            return self.error(if input.is_some() { &["`-->`", "`:-`"] } else { &["`,`", "`-->`", "`:-`"] });
        }

        let mut items = Vec::new();
        loop {
            let span = self.span();
            let e = self.expr()?;
            let item = if self.eat("#") {
                let state = self.expr()?;
                (e, Some(state), span)
            } else {
                (e, None, span)
            };
            items.push(item);
            if !self.eat(",") {
                break;
            }
        }

        let (post, post_spawn, post_span) = items.pop().expect("at least one item");
        if post_spawn.is_some() {
            return Err(syntax(post_span, "the last element of a rule body must be the post-state, not a spawn".into(), vec![]));
        }
        check_plain(&post, post_span, "post-state")?;
        let (mut output, mut spawn) = (None, None);
        for (e, state, span) in items {
            match state {
                Some(state) => {
                    if spawn.is_some() {
                        return Err(syntax(span, "at most one spawn per rule".into(), vec![]));
                    }
                    check_plain(&state, span, "spawn state")?;
                    let agent = match &e {
                        Term::Name(n) if &**n == "autonomous" => None,
                        Term::Name(_) | Term::Var(_) => Some(e),
                        _ => return Err(syntax(span, "spawn target must be a name or variable".into(), vec![])),
                    };
                    spawn = Some(Spawn { agent, state });
                }
                None => {
                    if output.is_some() {
                        return Err(syntax(span, "at most one output act per rule".into(), vec![]));
                    }
                    check_plain(&e, span, "output act")?;
                    output = Some(ActPattern::new(Signer::Wildcard, e));
                }
            }
        }

        if let (Some(_), Some(_)) = (&output, &spawn) {
            // Each transition emits exactly one act; a spawn is itself an act.
            return Err(syntax(post_span, "a rule may emit an act or spawn an agent, not both".into(), vec![]));
        }

        let conditions = if self.is_keyword("where") {
            self.bump();
            self.conditions()?
        } else {
            Vec::new()
        };
        if !self.eat(".") {
            return self.error(if conditions.is_empty() { &["`,`", "`where`", "`.`"] } else { &["`&`", "`,`", "`.`"] });
        }
        Ok(Rule { pre, input, output, spawn, post, conditions, origin, reactive: continuation })
    }

    fn conditions(&mut self) -> Result<Vec<Condition>, ParseError> {
        let mut out = vec![self.condition()?];
        while self.eat("&") || self.eat(",") {
            out.push(self.condition()?);
        }
        Ok(out)
    }

    fn condition(&mut self) -> Result<Condition, ParseError> {
        let span = self.span();
        for (name, op) in [("append_elem", ListOpKind::AppendElem), ("remove_elem", ListOpKind::RemoveElem)] {
            if self.is_keyword(name) && matches!(self.peek_at(1), Tok::Punct("(")) {
                self.bump();
                self.bump();
                let elem = self.expr()?;
                self.expect(",")?;
                let list = self.expr()?;
                self.expect(",")?;
                let result = match self.bump() {
                    Tok::Var(v) if v != "_" => v,
                    _ => {
                        self.pos -= 1;
                        return self.error(&["result variable"]);
                    }
                };
                self.expect(")")?;
                return Ok(Condition::ListOp { op, elem, list, result: result.into() });
            }
        }
        let lhs = self.expr()?;
        if self.eat(":=") {
            let Term::Var(var) = lhs else {
                return Err(syntax(span, "the left side of `:=` must be a variable".into(), vec![]));
            };
            let first = self.expr()?;
            return Ok(match self.try_choice(first.clone())? {
                Some(options) => Condition::AssignChoice { var, options },
                None => Condition::Assign { var, expr: first },
            });
        }
        let op = match self.peek() {
            Tok::Punct(">") => CmpOp::Gt,
            Tok::Punct(">=") => CmpOp::Ge,
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("=<") => CmpOp::Le,
            Tok::Punct("=") => CmpOp::Eq,
            Tok::Punct("=\\=") => CmpOp::Ne,
            _ => return self.error(&["`:=`", "comparison operator"]),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Condition::Compare { op, lhs, rhs })
    }

    /// After `V := e1`, tries to read `, e2, ..., or en`. Backtracks (returning
    /// `None`) when no `or` closes the sequence, in which case the commas were
    /// conjunctions.
    fn try_choice(&mut self, first: Term) -> Result<Option<Vec<Term>>, ParseError> {
        let save = self.pos;
        let mut options = vec![first];
        loop {
            if self.is_keyword("or") {
                self.bump();
                options.push(self.expr()?);
                return Ok(Some(options));
            }
            if !self.eat(",") {
                break;
            }
            if self.is_keyword("or") {
                continue;
            }
            match self.expr() {
                Ok(e) => options.push(e),
                Err(_) => break,
            }
        }
        self.pos = save;
        Ok(None)
    }
}

/// Rejects variable functors outside input-act position.
fn check_plain(t: &Term, span: Span, what: &str) -> Result<(), ParseError> {
    match t {
        Term::Compound(f, _) if &**f == SIGNED => {
            Err(syntax(span, format!("variable functor is only allowed in an input act, not in the {what}"), vec![]))
        }
        Term::Compound(_, args) => args.iter().try_for_each(|a| check_plain(a, span, what)),
        _ => Ok(()),
    }
}

fn to_input_act(t: Term, span: Span) -> Result<ActPattern, ParseError> {
    match &t {
        Term::Compound(f, args) if &**f == SIGNED => {
            check_plain(&args[1], span, "input payload")?;
            let Term::Var(v) = &args[0] else { unreachable!() };
            Ok(ActPattern::new(Signer::Var(v.clone()), args[1].clone()))
        }
        _ => {
            check_plain(&t, span, "input act")?;
            Ok(ActPattern::from_written(t))
        }
    }
}

/// Groups rules into roles.
///
/// Role names are the functors of 0-ary pre-states plus every functor named by
/// the activation or by a spawn. A rule whose pre-state functor is not a role
/// name is an auxiliary state of the role of the preceding rule (e.g.
/// `secretary_apply` belongs to `secretary`).
fn group_roles(rules: Vec<Rule>, activation: &[Activation]) -> Vec<RoleProgram> {
    let mut role_names: BTreeSet<Sym> = BTreeSet::new();
    for r in &rules {
        if let Term::Name(n) = &r.pre {
            role_names.insert(n.clone());
        }
        if let Some(s) = &r.spawn {
            if let Some((f, _)) = s.state.functor() {
                role_names.insert(f.into());
            }
        }
    }
    for a in activation {
        if let Some((f, _)) = a.state.functor() {
            role_names.insert(f.into());
        }
    }

    let mut roles: Vec<RoleProgram> = Vec::new();
    let mut current: Option<usize> = None;
    for rule in rules {
        let functor: Sym = rule.pre.functor().map(|(f, _)| f.into()).unwrap_or_else(|| "".into());
        let idx = if role_names.contains(&functor) {
            match roles.iter().position(|r| r.name == functor) {
                Some(i) => i,
                None => {
                    roles.push(RoleProgram { name: functor, rules: Vec::new() });
                    roles.len() - 1
                }
            }
        } else if let Some(i) = current {
            i
        } else {
            roles.push(RoleProgram { name: functor, rules: Vec::new() });
            roles.len() - 1
        };
        roles[idx].rules.push(rule);
        current = Some(idx);
    }
    roles
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let (activation, rules) = p.program()?;
    for r in &rules {
        if r.pre.functor().is_none() {
            return Err(syntax(r.origin, "a pre-state must be a name or compound term".into(), vec![]));
        }
    }
    let roles = group_roles(rules, &activation);
    Ok(Program { activation, roles })
}

/// Parses a single term. `V(A)` with a variable functor is rejected.
pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser::new(src)?;
    let span = p.span();
    let t = p.expr()?;
    check_plain(&t, span, "term")?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of input"]);
    }
    Ok(t)
}

/// Parses a bare activation list `[agent#state, ...]`.
pub fn parse_activation(src: &str) -> Result<Vec<Activation>, ParseError> {
    let mut p = Parser::new(src)?;
    let list = p.activation_list()?;
    if *p.peek() != Tok::Eof {
        return p.error(&["end of input"]);
    }
    Ok(list)
}

/// Reads `[a#r, ...]` back from an already parsed list term.
pub fn activation_from_term(t: &Term) -> Option<Vec<(Sym, Term)>> {
    t.as_list()?
        .into_iter()
        .map(|item| match item {
            Term::Compound(f, args) if &*f == "#" && args.len() == 2 => Some((args[0].as_name()?.into(), args[1].clone())),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::RuleKind;

    #[test]
    fn list_sugar_expands() {
        let t = parse_term("[X|Xs]").unwrap();
        assert_eq!(t.functor(), Some((crate::term::CONS, 2)));
        assert_eq!(parse_term("[a]").unwrap(), Term::cons(Term::name("a"), Term::nil()));
        assert_eq!(parse_term("[a,b|T]").unwrap().to_string(), "[a,b|T]");
    }

    #[test]
    fn numbers_are_exact() {
        assert_eq!(parse_term("103.65").unwrap(), Term::Num("103.65".parse().unwrap()));
        assert_eq!(parse_term("-3").unwrap(), Term::int(-3));
        assert_eq!(parse_term("R-1").unwrap().to_string(), "R-1");
    }

    #[test]
    fn anonymous_variables_are_distinct() {
        let t = parse_term("f(_, _)").unwrap();
        assert_ne!(t.args()[0], t.args()[1]);
    }

    #[test]
    fn quoted_names_are_names() {
        assert_eq!(parse_term("\",\"").unwrap(), Term::name(","));
        assert_eq!(parse_term("'foo'").unwrap(), Term::name("foo"));
    }

    #[test]
    fn missing_period_is_reported_at_end_of_input() {
        let err = parse_program("agent --> agent(10)").unwrap_err();
        assert_eq!(err.span(), Span { line: 1, col: 20 });
        assert!(err.to_string().contains("end of input"), "{err}");
    }

    #[test]
    fn variable_functor_confined_to_input_acts() {
        assert!(parse_program("s --> X(a), s.").is_err());
        assert!(parse_program("s, X(a) --> s.").is_ok());
        assert!(parse_term("X(a)").is_err());
    }

    #[test]
    fn choice_versus_conjunction() {
        let p = parse_program("m, b(R) --> v(R'), m where R' := R, R+1, or R-1.").unwrap();
        let c = &p.roles[0].rules[0].conditions;
        assert!(matches!(&c[0], Condition::AssignChoice { options, .. } if options.len() == 3));
        let p = parse_program("m(X) --> v(Y), m(Y) where Y := X + 1, Y > 2.").unwrap();
        let c = &p.roles[0].rules[0].conditions;
        assert_eq!(c.len(), 2);
        assert!(matches!(&c[0], Condition::Assign { .. }));
    }

    #[test]
    fn rule_kinds() {
        let p = parse_program(
            "h --> h(free).\n\
             h(free), T(reserve(Self)) --> ok(T), h(busy(T)).\n\
             h(busy(T)), T(checkout(Self)) --> h(free).\n\
             h(busy(T)) --> ping, h(busy(T)).",
        )
        .unwrap();
        let kinds: Vec<_> = p.roles[0].rules.iter().map(Rule::kind).collect();
        assert_eq!(kinds, [RuleKind::Silent, RuleKind::Combined, RuleKind::Input, RuleKind::Output]);
    }

    #[test]
    fn spawn_elements() {
        let p = parse_program("founder --> autonomous#secretary([Self]), member.\nsecretary --> secretary([]).\nmember --> member.").unwrap();
        let r = &p.roles[0].rules[0];
        assert!(r.spawn.as_ref().unwrap().is_autonomous());
        assert!(r.output.is_none());
        assert!(parse_program("a --> F#a, G#a, a.").is_err());
        assert!(parse_program("a --> F#a.").is_err());
    }

    #[test]
    fn auxiliary_states_join_the_preceding_role() {
        let p = parse_program(
            "sec --> sec([]).\n\
             sec(M), ballot(X,[],R) --> apply(X,R,M).\n\
             apply(X,R,M) :- sec(M) where R =< 0.\n\
             member --> says(hi), member.",
        )
        .unwrap();
        assert_eq!(p.roles.len(), 2);
        assert_eq!(p.roles[0].rules.len(), 3);
    }

    #[test]
    fn activation_rules() {
        assert_eq!(parse_activation("[]").unwrap().len(), 0);
        assert!(matches!(parse_activation("[a#host,a#tourist]"), Err(ParseError::DuplicateAgent { .. })));
        assert!(parse_activation("[autonomous#host]").is_err());
    }
}
