//! Value-passing CCS for trees: processes located on the vertices of a
//! graph, communicating over dual ranked symbols along its edges.
//!
//! The crate covers parsing and canonicality checking, the graph-rewriting
//! reduction semantics, the localized multi-labelled transition system,
//! barbed and localized weak bisimulation checking on finite slices, and a
//! few executable encodings (tree automata, value-passing CCS, the
//! alternating bit protocol).

pub mod encodings;
pub mod equivalence;
pub mod error;
pub mod expr;
pub mod gen;
pub mod graph;
pub mod llts;
pub mod parser;
pub mod reduction;
pub mod state;
pub mod syntax;

pub use error::{Error, Result};
pub use expr::{eval_bexpr, eval_expr, Expr, Value};
pub use graph::{Loc, LocGraph, ResidualMap};
pub use parser::{parse_expr, parse_process, parse_program, Program};
pub use state::{flatten, NetState};
pub use syntax::{check_canonical, Classification, DefEnv, Polarity, ProcTerm, Symbol};
