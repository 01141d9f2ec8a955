use thiserror::Error;

use crate::expr::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Syntax(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{symbol}` has arity {expected} but is used with {found} children")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        found: usize,
    },
    #[error("unresolved constant `{0}`")]
    UnresolvedConstant(String),
    #[error("constant `{constant}` takes {expected} arguments, got {found}")]
    ParamCount {
        constant: String,
        expected: usize,
        found: usize,
    },
    #[error("unknown process `{0}`")]
    UnknownProcess(String),
    #[error("term is not canonical at {path}: {reason}")]
    NotCanonical { path: String, reason: String },
    #[error("term has free data variables: {0}")]
    OpenTerm(String),
    #[error("term has free process variables: {0}")]
    ProcessVariable(String),
    #[error("unguarded recursion: unfolding `{0}` did not reach a prefix")]
    GuardViolation(String),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("canonical labelling exceeded {0} search leaves")]
    CanonBudget(usize),
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("invalid automaton: {0}")]
    Automaton(String),
    #[error("{0}")]
    Encoding(String),
    #[error("{0}")]
    Json(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
