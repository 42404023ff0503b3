//! Arithmetic and `where`-condition evaluation.

use crate::decimal::Decimal;
use crate::program::{CmpOp, Condition, ListOpKind};
use crate::term::{Subst, Sym, Term};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("arithmetic on non-number `{0}`")]
    ArithmeticOnNonNumber(Term),
    #[error("condition reads unbound variable `{0}`")]
    UnboundConditionVar(Sym),
}

fn arith_op(t: &Term) -> Option<(&str, &Term, &Term)> {
    match t {
        Term::Compound(op, args) if args.len() == 2 && matches!(&**op, "+" | "-" | "*") => Some((op, &args[0], &args[1])),
        _ => None,
    }
}

/// Evaluates a ground value: arithmetic subterms are reduced to numbers,
/// everything else is returned structurally (with nested arithmetic reduced).
pub fn eval_value(t: &Term) -> Result<Term, EvalError> {
    if let Some((op, a, b)) = arith_op(t) {
        let (a, b) = (eval_value(a)?, eval_value(b)?);
        let (Some(x), Some(y)) = (a.as_num(), b.as_num()) else {
            let bad = if a.as_num().is_none() { a } else { b };
            return Err(EvalError::ArithmeticOnNonNumber(bad));
        };
        let r: Decimal = match op {
            "+" => x + y,
            "-" => x - y,
            _ => x * y,
        };
        return Ok(Term::Num(r));
    }
    match t {
        Term::Var(v) => Err(EvalError::UnboundConditionVar(v.clone())),
        Term::Compound(f, args) => Ok(Term::Compound(f.clone(), args.iter().map(eval_value).collect::<Result<_, _>>()?)),
        _ => Ok(t.clone()),
    }
}

/// Reduces ground arithmetic subterms, leaving non-ground ones untouched.
pub fn simplify(t: &Term) -> Term {
    if t.is_ground() {
        if let Ok(v) = eval_value(t) {
            return v;
        }
    }
    match t {
        Term::Compound(f, args) => Term::Compound(f.clone(), args.iter().map(simplify).collect()),
        _ => t.clone(),
    }
}

fn value_under(t: &Term, theta: &Subst) -> Result<Term, EvalError> {
    eval_value(&t.substitute(theta))
}

/// Decides a comparison between two evaluated values.
pub fn compare(op: CmpOp, a: &Term, b: &Term) -> Result<bool, EvalError> {
    match op {
        CmpOp::Eq => Ok(a == b),
        CmpOp::Ne => Ok(a != b),
        _ => {
            let x = a.as_num().ok_or_else(|| EvalError::ArithmeticOnNonNumber(a.clone()))?;
            let y = b.as_num().ok_or_else(|| EvalError::ArithmeticOnNonNumber(b.clone()))?;
            Ok(match op {
                CmpOp::Gt => x > y,
                CmpOp::Ge => x >= y,
                CmpOp::Lt => x < y,
                CmpOp::Le => x <= y,
                CmpOp::Eq | CmpOp::Ne => unreachable!(),
            })
        }
    }
}

/// Applies a list operation to ground operands; `None` means the condition fails.
pub fn list_op(op: ListOpKind, elem: &Term, list: &Term) -> Option<Term> {
    let mut items = list.as_list()?;
    match op {
        ListOpKind::AppendElem => items.push(elem.clone()),
        ListOpKind::RemoveElem => {
            let at = items.iter().position(|x| x == elem)?;
            items.remove(at);
        }
    }
    Some(Term::list(items))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CondOutcome {
    Satisfied(Subst),
    Failed,
    /// An `AssignChoice` whose variable is not yet chosen.
    NeedsChoice { var: Sym, options: Vec<Term> },
}

/// Binds `var` to `value`, or checks agreement when it is already bound.
fn produce(theta: &mut Subst, var: &Sym, value: Term) -> bool {
    match theta.get(var) {
        Some(existing) => *existing == value,
        None => {
            theta.bind(var.clone(), value);
            true
        }
    }
}

/// Evaluates one condition whose inputs are all bound. Returns `Ok(false)`
/// when the condition does not hold.
fn eval_one(c: &Condition, theta: &mut Subst) -> Result<Result<bool, (Sym, Vec<Term>)>, EvalError> {
    Ok(Ok(match c {
        Condition::Assign { var, expr } => {
            let v = value_under(expr, theta)?;
            produce(theta, var, v)
        }
        Condition::AssignChoice { var, options } => {
            let opts: Vec<Term> = options.iter().map(|o| value_under(o, theta)).collect::<Result<_, _>>()?;
            match theta.get(var) {
                Some(chosen) => opts.contains(chosen),
                None => return Ok(Err((var.clone(), opts))),
            }
        }
        Condition::Compare { op, lhs, rhs } => compare(*op, &value_under(lhs, theta)?, &value_under(rhs, theta)?)?,
        Condition::ListOp { op, elem, list, result } => {
            match list_op(*op, &value_under(elem, theta)?, &value_under(list, theta)?) {
                Some(v) => produce(theta, result, v),
                None => false,
            }
        }
    }))
}

/// Left-to-right evaluation of a full condition list.
pub fn eval_conditions(conds: &[Condition], theta: &Subst) -> Result<CondOutcome, EvalError> {
    let mut theta = theta.clone();
    for c in conds {
        match eval_one(c, &mut theta)? {
            Ok(true) => {}
            Ok(false) => return Ok(CondOutcome::Failed),
            Err((var, options)) => return Ok(CondOutcome::NeedsChoice { var, options }),
        }
    }
    Ok(CondOutcome::Satisfied(theta))
}

/// Result of evaluating conditions as far as current bindings allow.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    pub theta: Subst,
    /// Conditions that still read unbound variables.
    pub residual: Vec<Condition>,
    /// Choices whose options are already known.
    pub choices: Vec<(Sym, Vec<Term>)>,
}

/// Evaluates every condition whose inputs are bound; `Ok(None)` when one of
/// them already fails.
pub fn partial_eval(conds: &[Condition], theta: &Subst) -> Result<Option<Partial>, EvalError> {
    let mut theta = theta.clone();
    let mut residual = Vec::new();
    let mut choices = Vec::new();
    let mut pending: Vec<Sym> = Vec::new();
    for c in conds {
        let ready = c.inputs().iter().all(|v| theta.contains(v) && !pending.contains(v));
        if !ready {
            pending.extend(c.target().cloned());
            residual.push(c.clone());
            continue;
        }
        match eval_one(c, &mut theta)? {
            Ok(true) => {}
            Ok(false) => return Ok(None),
            Err((var, options)) => {
                pending.push(var.clone());
                choices.push((var, options));
                residual.push(c.clone());
            }
        }
    }
    Ok(Some(Partial { theta, residual, choices }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn conds(src: &str) -> Vec<Condition> {
        parse_program(&format!("s --> s where {src}.")).unwrap().roles[0].rules[0].conditions.clone()
    }

    #[test]
    fn assignment_extends_substitution() {
        let theta = Subst::new().with("Balance", Term::int(10)).with("X", Term::int(3));
        let out = eval_conditions(&conds("Balance >= X & Balance' := Balance - X"), &theta).unwrap();
        let CondOutcome::Satisfied(t) = out else { panic!("{out:?}") };
        assert_eq!(t.get("Balance'"), Some(&Term::int(7)));
    }

    #[test]
    fn choice_is_routed_out() {
        let theta = Subst::new().with("R", Term::int(0));
        let out = eval_conditions(&conds("R' := R, R+1, or R-1"), &theta).unwrap();
        assert_eq!(out, CondOutcome::NeedsChoice { var: "R'".into(), options: vec![Term::int(0), Term::int(1), Term::int(-1)] });
        let chosen = theta.clone().with("R'", Term::int(-1));
        assert!(matches!(eval_conditions(&conds("R' := R, R+1, or R-1"), &chosen).unwrap(), CondOutcome::Satisfied(_)));
        let bogus = theta.with("R'", Term::int(5));
        assert_eq!(eval_conditions(&conds("R' := R, R+1, or R-1"), &bogus).unwrap(), CondOutcome::Failed);
    }

    #[test]
    fn disequality_and_errors() {
        let same = Subst::new().with("T", Term::name("udi")).with("T1", Term::name("udi"));
        assert_eq!(eval_conditions(&conds("T =\\= T1"), &same).unwrap(), CondOutcome::Failed);
        let names = Subst::new().with("A", Term::name("a"));
        assert!(matches!(eval_conditions(&conds("A > 0"), &names), Err(EvalError::ArithmeticOnNonNumber(_))));
        assert!(matches!(eval_conditions(&conds("B > 0"), &Subst::new()), Err(EvalError::UnboundConditionVar(_))));
    }

    #[test]
    fn list_operations() {
        let l = Term::list([Term::name("a"), Term::name("b")]);
        assert_eq!(list_op(ListOpKind::AppendElem, &Term::name("c"), &l).unwrap().to_string(), "[a,b,c]");
        assert_eq!(list_op(ListOpKind::RemoveElem, &Term::name("a"), &l).unwrap().to_string(), "[b]");
        assert!(list_op(ListOpKind::RemoveElem, &Term::name("z"), &l).is_none());
    }

    #[test]
    fn partial_evaluation_defers_unbound_reads() {
        let theta = Subst::new().with("Balance", Term::int(5));
        let p = partial_eval(&conds("Balance >= X & Balance' := Balance - X"), &theta).unwrap().unwrap();
        assert_eq!(p.residual.len(), 2);
        let none = partial_eval(&conds("Balance > 7 & Balance' := Balance - 1"), &theta).unwrap();
        assert!(none.is_none());
    }
}
