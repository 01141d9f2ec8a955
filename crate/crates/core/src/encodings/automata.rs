//! Top-down tree automata, Σ-trees and their process encodings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::expr::{Expr, Value};
use crate::syntax::{DefEnv, ProcTerm};

/// `(Q, f(x), (Q₁, …, Qₙ))`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Transition {
    pub from: String,
    pub symbol: String,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeAutomaton {
    pub name: String,
    pub states: Vec<String>,
    pub transitions: Vec<Transition>,
}

impl TreeAutomaton {
    pub fn new(name: &str, states: Vec<String>, transitions: Vec<Transition>) -> Result<TreeAutomaton> {
        let known: BTreeSet<&str> = states.iter().map(String::as_str).collect();
        if known.len() != states.len() {
            return Err(Error::Automaton(format!("{name}: duplicate state")));
        }
        let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &transitions {
            for q in std::iter::once(&t.from).chain(&t.targets) {
                if !known.contains(q.as_str()) {
                    return Err(Error::Automaton(format!("{name}: unknown state `{q}`")));
                }
            }
            if t.targets.is_empty() {
                return Err(Error::Automaton(format!("{name}: `{}` needs at least one child", t.symbol)));
            }
            if let Some(&a) = arities.get(t.symbol.as_str()) {
                if a != t.targets.len() {
                    return Err(Error::ArityMismatch {
                        symbol: t.symbol.clone(),
                        expected: a,
                        found: t.targets.len(),
                    });
                }
            }
            arities.insert(&t.symbol, t.targets.len());
        }
        Ok(TreeAutomaton {
            name: name.to_string(),
            states,
            transitions,
        })
    }

    pub fn has_state(&self, q: &str) -> bool {
        self.states.iter().any(|s| s == q)
    }

    pub fn transitions_from<'a>(&'a self, q: &'a str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| t.from == q)
    }

    /// A state without transitions only accepts the leaf `∗`.
    pub fn is_final(&self, q: &str) -> bool {
        self.transitions_from(q).next().is_none()
    }

    /// Direct recursive recogniser.
    pub fn recognizes(&self, q: &str, t: &SigmaTree) -> bool {
        match t {
            SigmaTree::Leaf => self.is_final(q),
            SigmaTree::Node {
                symbol, children, ..
            } => self.transitions_from(q).any(|tr| {
                tr.symbol == *symbol
                    && tr.targets.len() == children.len()
                    && tr.targets.iter().zip(children).all(|(qi, ti)| self.recognizes(qi, ti))
            }),
        }
    }

    /// `⟨A⟩_Q`: a constant per (state, visited set) along each path of the
    /// unrolling; a state already visited refers back to the constant that
    /// introduced it. Returns the definitions and the root occurrence.
    pub fn to_process(&self, q: &str) -> Result<(DefEnv, ProcTerm)> {
        if !self.has_state(q) {
            return Err(Error::Automaton(format!("{}: unknown state `{q}`", self.name)));
        }
        let mut b = Encoder {
            aut: self,
            env: DefEnv::new(),
            names: BTreeMap::new(),
        };
        let root = b.encode(q, &BTreeMap::new())?;
        Ok((b.env, root))
    }
}

struct Encoder<'a> {
    aut: &'a TreeAutomaton,
    env: DefEnv,
    /// (state, ancestors with their constants) → constant name.
    names: BTreeMap<(String, BTreeMap<String, String>), String>,
}

impl Encoder<'_> {
    fn encode(&mut self, q: &str, ancestors: &BTreeMap<String, String>) -> Result<ProcTerm> {
        if let Some(name) = ancestors.get(q) {
            return Ok(ProcTerm::constant(name, vec![]));
        }
        let key = (q.to_string(), ancestors.clone());
        if let Some(name) = self.names.get(&key) {
            return Ok(ProcTerm::constant(name, vec![]));
        }
        let name = if ancestors.is_empty() {
            format!("{}_{q}", self.aut.name)
        } else {
            format!("{}_{q}_{}", self.aut.name, self.names.len())
        };
        self.names.insert(key, name.clone());
        let mut inner = ancestors.clone();
        inner.insert(q.to_string(), name.clone());
        let mut summands = Vec::new();
        let transitions: Vec<Transition> = self.aut.transitions_from(q).cloned().collect();
        for tr in transitions {
            let children = tr
                .targets
                .iter()
                .map(|qi| self.encode(qi, &inner))
                .collect::<Result<Vec<_>>>()?;
            summands.push(ProcTerm::input(&tr.symbol, "x", children));
        }
        let body = if summands.is_empty() {
            ProcTerm::Idle
        } else {
            ProcTerm::sum_of(summands)
        };
        self.env.define(&name, &[], body)?;
        Ok(ProcTerm::constant(&name, vec![]))
    }
}

/// A Σ-tree with value passing: `∗` or `f(x)·(t₁, …, tₙ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SigmaTree {
    Leaf,
    Node {
        symbol: String,
        var: String,
        children: Vec<SigmaTree>,
    },
}

impl SigmaTree {
    pub fn node(symbol: &str, children: Vec<SigmaTree>) -> SigmaTree {
        SigmaTree::Node {
            symbol: symbol.to_string(),
            var: "x".into(),
            children,
        }
    }

    pub fn from_process(p: &ProcTerm) -> Option<SigmaTree> {
        match p {
            ProcTerm::Idle => Some(SigmaTree::Leaf),
            ProcTerm::Input {
                symbol,
                var,
                children,
            } => Some(SigmaTree::Node {
                symbol: symbol.clone(),
                var: var.clone(),
                children: children.iter().map(SigmaTree::from_process).collect::<Option<_>>()?,
            }),
            _ => None,
        }
    }

    /// `proc(t)`: the output-prefixed mirror of the tree carrying `v`.
    pub fn to_process(&self, v: &Value) -> ProcTerm {
        match self {
            SigmaTree::Leaf => ProcTerm::Idle,
            SigmaTree::Node {
                symbol, children, ..
            } => ProcTerm::output(
                symbol,
                Expr::Lit(v.clone()),
                children.iter().map(|c| c.to_process(v)).collect(),
            ),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SigmaTree::Leaf => 1,
            SigmaTree::Node { children, .. } => 1 + children.iter().map(SigmaTree::size).sum::<usize>(),
        }
    }
}

impl fmt::Display for SigmaTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaTree::Leaf => f.write_str("*"),
            SigmaTree::Node {
                symbol,
                var,
                children,
            } => {
                write!(f, "{symbol}({var}).(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}
