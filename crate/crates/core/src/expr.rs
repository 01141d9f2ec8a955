//! Data values and the closed-expression evaluator.
//!
//! The calculus only assumes *some* evaluation function for closed
//! expressions. This module fixes a small one: integers, booleans, atoms,
//! pairs and lists, which is enough for every protocol in the examples.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A data value carried by an output prefix or bound by an input prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Atom(String),
    Pair(Box<Value>, Box<Value>),
    List(Vec<Value>),
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn atom(name: &str) -> Value {
        Value::Atom(name.to_string())
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Atom(_) => "atom",
            Value::Pair(..) => "pair",
            Value::List(_) => "list",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Atom(a) => write!(f, "{a}"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnaryOp {
    /// Boolean negation, or `1 - b` on the bits 0 and 1.
    Not,
    Neg,
    Fst,
    Snd,
    Head,
    Tail,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    And,
    Or,
    Append,
}

/// Arithmetic and boolean expressions share one syntax tree; a boolean
/// expression is simply one that evaluates to [`Value::Bool`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Var(String),
    Lit(Value),
    Pair(Box<Expr>, Box<Expr>),
    List(Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("free variable `{0}` in expression")]
    FreeVariable(String),
    #[error("type error: `{op}` expects {expected}, got {got}")]
    Type {
        op: &'static str,
        expected: &'static str,
        got: String,
    },
    #[error("`{0}` of the empty list")]
    EmptyList(&'static str),
    #[error("integer overflow")]
    Overflow,
}

fn type_error(op: &'static str, expected: &'static str, got: &Value) -> EvalError {
    EvalError::Type {
        op,
        expected,
        got: format!("{} `{got}`", got.kind()),
    }
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn int(n: i64) -> Expr {
        Expr::Lit(Value::Int(n))
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut out);
        out
    }

    pub(crate) fn collect_free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Lit(_) => {}
            Expr::Pair(a, b) | Expr::Binary(_, a, b) => {
                a.collect_free_vars(out);
                b.collect_free_vars(out);
            }
            Expr::List(items) => items.iter().for_each(|e| e.collect_free_vars(out)),
            Expr::Unary(_, e) => e.collect_free_vars(out),
        }
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Expr::Var(_) => false,
            Expr::Lit(_) => true,
            Expr::Pair(a, b) | Expr::Binary(_, a, b) => a.is_closed() && b.is_closed(),
            Expr::List(items) => items.iter().all(Expr::is_closed),
            Expr::Unary(_, e) => e.is_closed(),
        }
    }

    /// `e{v/x}`.
    pub fn subst(&self, var: &str, val: &Value) -> Expr {
        match self {
            Expr::Var(x) if x == var => Expr::Lit(val.clone()),
            Expr::Var(_) | Expr::Lit(_) => self.clone(),
            Expr::Pair(a, b) => Expr::Pair(Box::new(a.subst(var, val)), Box::new(b.subst(var, val))),
            Expr::List(items) => Expr::List(items.iter().map(|e| e.subst(var, val)).collect()),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.subst(var, val))),
            Expr::Binary(op, a, b) => {
                Expr::Binary(*op, Box::new(a.subst(var, val)), Box::new(b.subst(var, val)))
            }
        }
    }

    /// Replaces the expression by its value when it is closed and evaluates.
    pub fn fold(&self) -> Expr {
        if let Expr::Lit(_) = self {
            return self.clone();
        }
        if self.is_closed() {
            if let Ok(v) = eval_expr(self) {
                return Expr::Lit(v);
            }
        }
        self.clone()
    }
}

pub fn eval_expr(e: &Expr) -> Result<Value, EvalError> {
    match e {
        Expr::Var(x) => Err(EvalError::FreeVariable(x.clone())),
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Pair(a, b) => Ok(Value::pair(eval_expr(a)?, eval_expr(b)?)),
        Expr::List(items) => Ok(Value::List(
            items.iter().map(eval_expr).collect::<Result<_, _>>()?,
        )),
        Expr::Unary(op, e) => eval_unary(*op, eval_expr(e)?),
        Expr::Binary(op, a, b) => eval_binary(*op, eval_expr(a)?, eval_expr(b)?),
    }
}

pub fn eval_bexpr(b: &Expr) -> Result<bool, EvalError> {
    match eval_expr(b)? {
        Value::Bool(b) => Ok(b),
        other => Err(type_error("condition", "bool", &other)),
    }
}

fn eval_unary(op: UnaryOp, v: Value) -> Result<Value, EvalError> {
    match (op, v) {
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (UnaryOp::Not, Value::Int(n @ (0 | 1))) => Ok(Value::Int(1 - n)),
        (UnaryOp::Not, other) => Err(type_error("not", "bool or bit", &other)),
        (UnaryOp::Neg, Value::Int(n)) => n.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
        (UnaryOp::Neg, other) => Err(type_error("-", "int", &other)),
        (UnaryOp::Fst, Value::Pair(a, _)) => Ok(*a),
        (UnaryOp::Fst, other) => Err(type_error("fst", "pair", &other)),
        (UnaryOp::Snd, Value::Pair(_, b)) => Ok(*b),
        (UnaryOp::Snd, other) => Err(type_error("snd", "pair", &other)),
        (UnaryOp::Head, Value::List(items)) => {
            items.into_iter().next().ok_or(EvalError::EmptyList("head"))
        }
        (UnaryOp::Head, other) => Err(type_error("head", "list", &other)),
        (UnaryOp::Tail, Value::List(mut items)) => {
            if items.is_empty() {
                return Err(EvalError::EmptyList("tail"));
            }
            items.remove(0);
            Ok(Value::List(items))
        }
        (UnaryOp::Tail, other) => Err(type_error("tail", "list", &other)),
        (UnaryOp::Null, Value::List(items)) => Ok(Value::Bool(items.is_empty())),
        (UnaryOp::Null, other) => Err(type_error("null", "list", &other)),
    }
}

fn eval_binary(op: BinaryOp, a: Value, b: Value) -> Result<Value, EvalError> {
    use BinaryOp::*;
    match op {
        Add | Sub | Mul | Lt | Le => {
            let (x, y) = match (&a, &b) {
                (Value::Int(x), Value::Int(y)) => (*x, *y),
                (Value::Int(_), other) | (other, _) => {
                    return Err(type_error(op_name(op), "int", other))
                }
            };
            match op {
                Add => x.checked_add(y).map(Value::Int).ok_or(EvalError::Overflow),
                Sub => x.checked_sub(y).map(Value::Int).ok_or(EvalError::Overflow),
                Mul => x.checked_mul(y).map(Value::Int).ok_or(EvalError::Overflow),
                Lt => Ok(Value::Bool(x < y)),
                _ => Ok(Value::Bool(x <= y)),
            }
        }
        Eq => Ok(Value::Bool(a == b)),
        Ne => Ok(Value::Bool(a != b)),
        And | Or => match (a, b) {
            (Value::Bool(x), Value::Bool(y)) => {
                Ok(Value::Bool(if op == And { x && y } else { x || y }))
            }
            (Value::Bool(_), other) | (other, _) => Err(type_error(op_name(op), "bool", &other)),
        },
        Append => match a {
            Value::List(mut items) => {
                items.push(b);
                Ok(Value::List(items))
            }
            other => Err(type_error("append", "list", &other)),
        },
    }
}

pub(crate) fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "+",
        BinaryOp::Sub => "-",
        BinaryOp::Mul => "*",
        BinaryOp::Eq => "=",
        BinaryOp::Ne => "!=",
        BinaryOp::Lt => "<",
        BinaryOp::Le => "<=",
        BinaryOp::And => "&&",
        BinaryOp::Or => "||",
        BinaryOp::Append => "append",
    }
}

fn precedence(op: BinaryOp) -> u8 {
    match op {
        BinaryOp::Or => 1,
        BinaryOp::And => 2,
        BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le => 3,
        BinaryOp::Add | BinaryOp::Sub => 4,
        BinaryOp::Mul => 5,
        BinaryOp::Append => 6,
    }
}

impl Expr {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, outer: u8) -> fmt::Result {
        match self {
            Expr::Var(x) => f.write_str(x),
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Pair(a, b) => write!(f, "({a}, {b})"),
            Expr::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
            Expr::Unary(op, e) => {
                let name = match op {
                    UnaryOp::Not => "not",
                    UnaryOp::Neg => "neg",
                    UnaryOp::Fst => "fst",
                    UnaryOp::Snd => "snd",
                    UnaryOp::Head => "head",
                    UnaryOp::Tail => "tail",
                    UnaryOp::Null => "null",
                };
                write!(f, "{name}({e})")
            }
            Expr::Binary(BinaryOp::Append, a, b) => write!(f, "append({a}, {b})"),
            Expr::Binary(op, a, b) => {
                let p = precedence(*op);
                if p < outer {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, p)?;
                write!(f, " {} ", op_name(*op))?;
                b.fmt_prec(f, p + 1)?;
                if p < outer {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(items: &[i64]) -> Expr {
        Expr::Lit(Value::List(items.iter().map(|n| Value::Int(*n)).collect()))
    }

    #[test]
    fn list_primitives() {
        assert_eq!(eval_expr(&Expr::unary(UnaryOp::Head, list(&[1, 2]))), Ok(Value::Int(1)));
        assert_eq!(
            eval_expr(&Expr::binary(BinaryOp::Append, list(&[]), Expr::int(5))),
            Ok(Value::List(vec![Value::Int(5)]))
        );
        assert_eq!(eval_bexpr(&Expr::unary(UnaryOp::Null, list(&[]))), Ok(true));
        assert_eq!(
            eval_expr(&Expr::unary(UnaryOp::Head, list(&[]))),
            Err(EvalError::EmptyList("head"))
        );
    }

    #[test]
    fn pairs_and_atoms() {
        let ack = |b| Expr::Pair(Box::new(Expr::Lit(Value::atom("Ack"))), Box::new(Expr::int(b)));
        assert_eq!(eval_expr(&Expr::unary(UnaryOp::Snd, ack(0))), Ok(Value::Int(0)));
        assert_eq!(eval_bexpr(&Expr::binary(BinaryOp::Eq, ack(0), ack(1))), Ok(false));
    }

    #[test]
    fn bit_negation() {
        assert_eq!(eval_expr(&Expr::unary(UnaryOp::Not, Expr::int(0))), Ok(Value::Int(1)));
        assert_eq!(eval_expr(&Expr::unary(UnaryOp::Not, Expr::int(1))), Ok(Value::Int(0)));
        assert!(eval_expr(&Expr::unary(UnaryOp::Not, Expr::int(2))).is_err());
    }

    #[test]
    fn type_errors_and_free_variables() {
        assert!(matches!(
            eval_expr(&Expr::unary(UnaryOp::Fst, Expr::int(3))),
            Err(EvalError::Type { op: "fst", .. })
        ));
        assert_eq!(eval_expr(&Expr::var("x")), Err(EvalError::FreeVariable("x".into())));
        assert!(eval_bexpr(&Expr::int(1)).is_err());
    }

    #[test]
    fn substitution_and_folding() {
        let e = Expr::binary(BinaryOp::Add, Expr::var("x"), Expr::int(1));
        assert!(!e.is_closed());
        let closed = e.subst("x", &Value::Int(5));
        assert_eq!(closed.fold(), Expr::int(6));
        assert_eq!(e.subst("y", &Value::Int(5)), e);
    }
}
