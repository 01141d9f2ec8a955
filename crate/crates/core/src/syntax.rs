//! Abstract syntax of processes, the constant environment, and the purely
//! syntactic operations on terms: canonicality, value and process
//! substitution, sorts, and symbol renaming.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{eval_bexpr, Expr, Value};
use crate::state::HeadForm;

/// The one symbol of arity zero.
pub const IDLE_SYMBOL: &str = "*";

/// Separator between a symbol's base name and the counter of an
/// alpha-converted restricted copy, e.g. `f~3`.
pub const FRESH_MARK: char = '~';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Plain,
    Co,
}

impl Polarity {
    pub fn dual(self) -> Polarity {
        match self {
            Polarity::Plain => Polarity::Co,
            Polarity::Co => Polarity::Plain,
        }
    }
}

/// A ranked symbol together with its polarity (`f` or `f̄`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Symbol {
    pub name: String,
    pub arity: usize,
    pub polarity: Polarity,
}

impl Symbol {
    pub fn new(name: &str, arity: usize, polarity: Polarity) -> Symbol {
        Symbol {
            name: name.to_string(),
            arity,
            polarity,
        }
    }

    pub fn idle() -> Symbol {
        Symbol::new(IDLE_SYMBOL, 0, Polarity::Plain)
    }

    pub fn is_idle(&self) -> bool {
        self.arity == 0
    }

    /// `∗̄ = ∗`; every other symbol flips polarity.
    pub fn dual(&self) -> Symbol {
        if self.is_idle() {
            return self.clone();
        }
        Symbol {
            polarity: self.polarity.dual(),
            ..self.clone()
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.polarity {
            Polarity::Plain => write!(f, "{}", self.name),
            Polarity::Co => write!(f, "'{}", self.name),
        }
    }
}

/// The base name of a possibly alpha-converted symbol.
pub fn base_name(symbol: &str) -> &str {
    symbol.split(FRESH_MARK).next().unwrap_or(symbol)
}

pub fn is_fresh_name(symbol: &str) -> bool {
    symbol.contains(FRESH_MARK)
}

/// Symbol renaming attached to a constant occurrence: body symbol → actual
/// symbol. Only ever non-empty after alpha-conversion of restrictions.
pub type Renaming = BTreeMap<String, String>;

/// A graph literal: named abstract locations with their processes and an
/// undirected edge list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GraphTerm {
    pub vertices: Vec<(String, ProcTerm)>,
    pub edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcTerm {
    Idle,
    Nil,
    Var(String),
    Input {
        symbol: String,
        var: String,
        children: Vec<ProcTerm>,
    },
    Output {
        symbol: String,
        expr: Expr,
        children: Vec<ProcTerm>,
    },
    Graph(GraphTerm),
    Sum(Box<ProcTerm>, Box<ProcTerm>),
    Restrict(Box<ProcTerm>, BTreeSet<String>),
    Cond(Expr, Box<ProcTerm>, Box<ProcTerm>),
    Const {
        name: String,
        args: Vec<Expr>,
        renaming: Renaming,
    },
}

impl ProcTerm {
    pub fn input(symbol: &str, var: &str, children: Vec<ProcTerm>) -> ProcTerm {
        ProcTerm::Input {
            symbol: symbol.to_string(),
            var: var.to_string(),
            children,
        }
    }

    pub fn output(symbol: &str, expr: Expr, children: Vec<ProcTerm>) -> ProcTerm {
        ProcTerm::Output {
            symbol: symbol.to_string(),
            expr,
            children,
        }
    }

    pub fn constant(name: &str, args: Vec<Expr>) -> ProcTerm {
        ProcTerm::Const {
            name: name.to_string(),
            args,
            renaming: Renaming::new(),
        }
    }

    pub fn sum(a: ProcTerm, b: ProcTerm) -> ProcTerm {
        ProcTerm::Sum(Box::new(a), Box::new(b))
    }

    /// Left-nested sum of the given summands; `0` when empty.
    pub fn sum_of(summands: impl IntoIterator<Item = ProcTerm>) -> ProcTerm {
        summands
            .into_iter()
            .reduce(ProcTerm::sum)
            .unwrap_or(ProcTerm::Nil)
    }

    pub fn cond(b: Expr, then: ProcTerm, otherwise: ProcTerm) -> ProcTerm {
        ProcTerm::Cond(b, Box::new(then), Box::new(otherwise))
    }

    pub fn restrict(p: ProcTerm, symbols: &[&str]) -> ProcTerm {
        ProcTerm::Restrict(Box::new(p), symbols.iter().map(|s| s.to_string()).collect())
    }

    /// `P ⊕_D Q` with `D` given as pairs of indices into the two operand lists.
    /// Each operand sits on its own abstract location; nested graphs are
    /// expanded by the flattener.
    pub fn compose(parts: Vec<ProcTerm>, edges: &[(usize, usize)]) -> ProcTerm {
        let names: Vec<String> = (0..parts.len()).map(|i| format!("v{i}")).collect();
        ProcTerm::Graph(GraphTerm {
            vertices: names.iter().cloned().zip(parts).collect(),
            edges: edges
                .iter()
                .map(|&(a, b)| (names[a].clone(), names[b].clone()))
                .collect(),
        })
    }

    /// `P | Q`: complete cross edges.
    pub fn par(p: ProcTerm, q: ProcTerm) -> ProcTerm {
        ProcTerm::compose(vec![p, q], &[(0, 1)])
    }

    /// `P ⊕ Q`: no cross edges.
    pub fn oplus(p: ProcTerm, q: ProcTerm) -> ProcTerm {
        ProcTerm::compose(vec![p, q], &[])
    }

    /// Complete graph over the given processes.
    pub fn complete(parts: Vec<ProcTerm>) -> ProcTerm {
        let n = parts.len();
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        ProcTerm::compose(parts, &edges)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut out);
        out
    }

    fn collect_free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) => {}
            ProcTerm::Input { var, children, .. } => {
                let mut inner = BTreeSet::new();
                children.iter().for_each(|c| c.collect_free_vars(&mut inner));
                inner.remove(var);
                out.extend(inner);
            }
            ProcTerm::Output { expr, children, .. } => {
                expr.collect_free_vars(out);
                children.iter().for_each(|c| c.collect_free_vars(out));
            }
            ProcTerm::Graph(g) => g.vertices.iter().for_each(|(_, p)| p.collect_free_vars(out)),
            ProcTerm::Sum(a, b) => {
                a.collect_free_vars(out);
                b.collect_free_vars(out);
            }
            ProcTerm::Restrict(p, _) => p.collect_free_vars(out),
            ProcTerm::Cond(b, p, q) => {
                b.collect_free_vars(out);
                p.collect_free_vars(out);
                q.collect_free_vars(out);
            }
            ProcTerm::Const { args, .. } => args.iter().for_each(|a| a.collect_free_vars(out)),
        }
    }

    pub fn is_data_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn proc_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| {
            if let ProcTerm::Var(x) = t {
                out.insert(x.clone());
            }
        });
        out
    }

    /// Pre-order traversal over every sub-term.
    pub fn visit(&self, f: &mut impl FnMut(&ProcTerm)) {
        f(self);
        match self {
            ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) | ProcTerm::Const { .. } => {}
            ProcTerm::Input { children, .. } | ProcTerm::Output { children, .. } => {
                children.iter().for_each(|c| c.visit(f))
            }
            ProcTerm::Graph(g) => g.vertices.iter().for_each(|(_, p)| p.visit(f)),
            ProcTerm::Sum(a, b) | ProcTerm::Cond(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ProcTerm::Restrict(p, _) => p.visit(f),
        }
    }

    /// Every symbol name written in the term, including renaming targets.
    pub fn written_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |t| match t {
            ProcTerm::Input { symbol, .. } | ProcTerm::Output { symbol, .. } => {
                out.insert(symbol.clone());
            }
            ProcTerm::Restrict(_, set) => out.extend(set.iter().cloned()),
            ProcTerm::Const { renaming, .. } => out.extend(renaming.values().cloned()),
            _ => {}
        });
        out
    }
}

/// `P{v/x}`: capture-free substitution of a value for a data variable.
/// Input binders on `x` stop the descent.
pub fn subst_value(term: &ProcTerm, var: &str, val: &Value) -> ProcTerm {
    match term {
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) => term.clone(),
        ProcTerm::Input {
            symbol,
            var: bound,
            children,
        } => {
            if bound == var {
                term.clone()
            } else {
                ProcTerm::Input {
                    symbol: symbol.clone(),
                    var: bound.clone(),
                    children: children.iter().map(|c| subst_value(c, var, val)).collect(),
                }
            }
        }
        ProcTerm::Output {
            symbol,
            expr,
            children,
        } => ProcTerm::Output {
            symbol: symbol.clone(),
            expr: expr.subst(var, val),
            children: children.iter().map(|c| subst_value(c, var, val)).collect(),
        },
        ProcTerm::Graph(g) => ProcTerm::Graph(GraphTerm {
            vertices: g
                .vertices
                .iter()
                .map(|(n, p)| (n.clone(), subst_value(p, var, val)))
                .collect(),
            edges: g.edges.clone(),
        }),
        ProcTerm::Sum(a, b) => ProcTerm::sum(subst_value(a, var, val), subst_value(b, var, val)),
        ProcTerm::Restrict(p, set) => {
            ProcTerm::Restrict(Box::new(subst_value(p, var, val)), set.clone())
        }
        ProcTerm::Cond(b, p, q) => ProcTerm::cond(
            b.subst(var, val),
            subst_value(p, var, val),
            subst_value(q, var, val),
        ),
        ProcTerm::Const {
            name,
            args,
            renaming,
        } => ProcTerm::Const {
            name: name.clone(),
            args: args.iter().map(|a| a.subst(var, val)).collect(),
            renaming: renaming.clone(),
        },
    }
}

/// `P{v⃗/x⃗}`.
pub fn subst_values(term: &ProcTerm, vars: &[String], vals: &[Value]) -> ProcTerm {
    vars.iter()
        .zip(vals)
        .fold(term.clone(), |t, (x, v)| subst_value(&t, x, v))
}

/// `Q[P/X]`. Input binders that would capture a free data variable of the
/// payload are renamed first.
pub fn subst_process(host: &ProcTerm, var: &str, payload: &ProcTerm) -> ProcTerm {
    let payload_fv = payload.free_vars();
    subst_process_inner(host, var, payload, &payload_fv)
}

fn subst_process_inner(
    host: &ProcTerm,
    x: &str,
    payload: &ProcTerm,
    payload_fv: &BTreeSet<String>,
) -> ProcTerm {
    let rec = |t: &ProcTerm| subst_process_inner(t, x, payload, payload_fv);
    match host {
        ProcTerm::Var(y) if y == x => payload.clone(),
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) | ProcTerm::Const { .. } => host.clone(),
        ProcTerm::Input {
            symbol,
            var,
            children,
        } => {
            let occurs = children.iter().any(|c| c.proc_vars().contains(x));
            if occurs && payload_fv.contains(var) {
                let mut taken = payload_fv.clone();
                children.iter().for_each(|c| taken.extend(c.free_vars()));
                let fresh = fresh_var(var, &taken);
                let renamed: Vec<ProcTerm> = children
                    .iter()
                    .map(|c| rename_data_var(c, var, &fresh))
                    .collect();
                ProcTerm::Input {
                    symbol: symbol.clone(),
                    var: fresh,
                    children: renamed.iter().map(rec).collect(),
                }
            } else {
                ProcTerm::Input {
                    symbol: symbol.clone(),
                    var: var.clone(),
                    children: children.iter().map(rec).collect(),
                }
            }
        }
        ProcTerm::Output {
            symbol,
            expr,
            children,
        } => ProcTerm::Output {
            symbol: symbol.clone(),
            expr: expr.clone(),
            children: children.iter().map(rec).collect(),
        },
        ProcTerm::Graph(g) => ProcTerm::Graph(GraphTerm {
            vertices: g.vertices.iter().map(|(n, p)| (n.clone(), rec(p))).collect(),
            edges: g.edges.clone(),
        }),
        ProcTerm::Sum(a, b) => ProcTerm::sum(rec(a), rec(b)),
        ProcTerm::Restrict(p, set) => ProcTerm::Restrict(Box::new(rec(p)), set.clone()),
        ProcTerm::Cond(b, p, q) => ProcTerm::cond(b.clone(), rec(p), rec(q)),
    }
}

fn fresh_var(base: &str, taken: &BTreeSet<String>) -> String {
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|v| !taken.contains(v))
        .expect("unbounded counter")
}

fn rename_data_var(term: &ProcTerm, from: &str, to: &str) -> ProcTerm {
    let rename_expr = |e: &Expr| -> Expr {
        let mut out = e.clone();
        rename_expr_var(&mut out, from, to);
        out
    };
    match term {
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) => term.clone(),
        ProcTerm::Input {
            symbol,
            var,
            children,
        } => {
            if var == from {
                term.clone()
            } else {
                ProcTerm::Input {
                    symbol: symbol.clone(),
                    var: var.clone(),
                    children: children.iter().map(|c| rename_data_var(c, from, to)).collect(),
                }
            }
        }
        ProcTerm::Output {
            symbol,
            expr,
            children,
        } => ProcTerm::Output {
            symbol: symbol.clone(),
            expr: rename_expr(expr),
            children: children.iter().map(|c| rename_data_var(c, from, to)).collect(),
        },
        ProcTerm::Graph(g) => ProcTerm::Graph(GraphTerm {
            vertices: g
                .vertices
                .iter()
                .map(|(n, p)| (n.clone(), rename_data_var(p, from, to)))
                .collect(),
            edges: g.edges.clone(),
        }),
        ProcTerm::Sum(a, b) => {
            ProcTerm::sum(rename_data_var(a, from, to), rename_data_var(b, from, to))
        }
        ProcTerm::Restrict(p, set) => {
            ProcTerm::Restrict(Box::new(rename_data_var(p, from, to)), set.clone())
        }
        ProcTerm::Cond(b, p, q) => ProcTerm::cond(
            rename_expr(b),
            rename_data_var(p, from, to),
            rename_data_var(q, from, to),
        ),
        ProcTerm::Const {
            name,
            args,
            renaming,
        } => ProcTerm::Const {
            name: name.clone(),
            args: args.iter().map(rename_expr).collect(),
            renaming: renaming.clone(),
        },
    }
}

fn rename_expr_var(e: &mut Expr, from: &str, to: &str) {
    match e {
        Expr::Var(x) if x == from => *x = to.to_string(),
        Expr::Var(_) | Expr::Lit(_) => {}
        Expr::Pair(a, b) | Expr::Binary(_, a, b) => {
            rename_expr_var(a, from, to);
            rename_expr_var(b, from, to);
        }
        Expr::List(items) => items.iter_mut().for_each(|i| rename_expr_var(i, from, to)),
        Expr::Unary(_, a) => rename_expr_var(a, from, to),
    }
}

/// Folds closed expressions to literals and resolves conditionals whose
/// guard is closed. Behaviour is unchanged; the result is a tighter
/// representative for state identity.
pub fn normalize(term: &ProcTerm) -> ProcTerm {
    match term {
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) => term.clone(),
        ProcTerm::Input {
            symbol,
            var,
            children,
        } => ProcTerm::Input {
            symbol: symbol.clone(),
            var: var.clone(),
            children: children.iter().map(normalize).collect(),
        },
        ProcTerm::Output {
            symbol,
            expr,
            children,
        } => ProcTerm::Output {
            symbol: symbol.clone(),
            expr: expr.fold(),
            children: children.iter().map(normalize).collect(),
        },
        ProcTerm::Graph(g) => ProcTerm::Graph(GraphTerm {
            vertices: g.vertices.iter().map(|(n, p)| (n.clone(), normalize(p))).collect(),
            edges: g.edges.clone(),
        }),
        ProcTerm::Sum(a, b) => ProcTerm::sum(normalize(a), normalize(b)),
        ProcTerm::Restrict(p, set) => ProcTerm::Restrict(Box::new(normalize(p)), set.clone()),
        ProcTerm::Cond(b, p, q) => {
            if b.is_closed() {
                if let Ok(value) = eval_bexpr(b) {
                    return normalize(if value { p } else { q });
                }
            }
            ProcTerm::cond(b.fold(), normalize(p), normalize(q))
        }
        ProcTerm::Const {
            name,
            args,
            renaming,
        } => ProcTerm::Const {
            name: name.clone(),
            args: args.iter().map(Expr::fold).collect(),
            renaming: renaming.clone(),
        },
    }
}

/// A constant definition `A(x⃗) ≝ P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Definition {
    pub params: Vec<String>,
    pub body: ProcTerm,
}

/// Per-environment memo tables. Reads dominate; writes happen once per key.
#[derive(Debug, Default)]
pub(crate) struct EnvCaches {
    pub(crate) heads: RwLock<HashMap<ProcTerm, Arc<HeadForm>>>,
    pub(crate) classes: RwLock<HashMap<String, Classification>>,
    sorts: OnceLock<BTreeMap<String, BTreeSet<String>>>,
}

/// Constant definitions plus the symbol arity table.
#[derive(Debug, Default)]
pub struct DefEnv {
    defs: BTreeMap<String, Definition>,
    arities: BTreeMap<String, usize>,
    pub(crate) caches: EnvCaches,
}

impl Clone for DefEnv {
    fn clone(&self) -> Self {
        DefEnv {
            defs: self.defs.clone(),
            arities: self.arities.clone(),
            caches: EnvCaches::default(),
        }
    }
}

impl DefEnv {
    pub fn new() -> DefEnv {
        DefEnv::default()
    }

    pub fn declare_symbol(&mut self, name: &str, arity: usize) -> Result<()> {
        if name == IDLE_SYMBOL || arity == 0 {
            return Err(Error::Syntax(format!(
                "`{name}/{arity}`: only `*` has arity 0 and it cannot be declared"
            )));
        }
        match self.arities.get(name) {
            Some(&a) if a != arity => Err(Error::ArityMismatch {
                symbol: name.to_string(),
                expected: a,
                found: arity,
            }),
            _ => {
                self.arities.insert(name.to_string(), arity);
                Ok(())
            }
        }
    }

    /// Records the arity of every prefix symbol used in `term`.
    pub fn learn_symbols(&mut self, term: &ProcTerm) -> Result<()> {
        let mut seen = Vec::new();
        term.visit(&mut |t| match t {
            ProcTerm::Input {
                symbol, children, ..
            }
            | ProcTerm::Output {
                symbol, children, ..
            } => seen.push((base_name(symbol).to_string(), children.len())),
            _ => {}
        });
        for (name, arity) in seen {
            self.declare_symbol(&name, arity)?;
        }
        Ok(())
    }

    pub fn arity(&self, symbol: &str) -> Option<usize> {
        if symbol == IDLE_SYMBOL {
            return Some(0);
        }
        self.arities.get(base_name(symbol)).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (&String, &usize)> {
        self.arities.iter()
    }

    /// Adds or replaces a definition and learns the arities it uses.
    pub fn define(&mut self, name: &str, params: &[&str], body: ProcTerm) -> Result<()> {
        self.learn_symbols(&body)?;
        self.defs.insert(
            name.to_string(),
            Definition {
                params: params.iter().map(|p| p.to_string()).collect(),
                body,
            },
        );
        self.caches = EnvCaches::default();
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.defs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.defs.contains_key(name)
    }

    pub fn definitions(&self) -> impl Iterator<Item = (&String, &Definition)> {
        self.defs.iter()
    }

    pub fn merge(&mut self, other: &DefEnv) -> Result<()> {
        for (name, arity) in &other.arities {
            self.declare_symbol(name, *arity)?;
        }
        for (name, def) in &other.defs {
            self.defs.insert(name.clone(), def.clone());
        }
        self.caches = EnvCaches::default();
        Ok(())
    }

    /// Unfolds `A(v⃗)` to `T{v⃗/x⃗}` with the occurrence's renaming applied.
    pub fn unfold(&self, name: &str, args: &[Expr], renaming: &Renaming) -> Result<ProcTerm> {
        let def = self
            .get(name)
            .ok_or_else(|| Error::UnresolvedConstant(name.to_string()))?;
        if def.params.len() != args.len() {
            return Err(Error::ParamCount {
                constant: name.to_string(),
                expected: def.params.len(),
                found: args.len(),
            });
        }
        let values = args
            .iter()
            .map(crate::expr::eval_expr)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let body = subst_values(&def.body, &def.params, &values);
        if renaming.is_empty() {
            Ok(body)
        } else {
            rename_symbols(&body, renaming, self)
        }
    }

    /// Least solution of the sort equations for every constant, over the
    /// symbols written in the definition bodies.
    fn constant_sorts(&self) -> &BTreeMap<String, BTreeSet<String>> {
        self.caches.sorts.get_or_init(|| {
            let mut sorts: BTreeMap<String, BTreeSet<String>> =
                self.defs.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
            loop {
                let mut changed = false;
                for (name, def) in &self.defs {
                    let s = sort_with(&def.body, &sorts);
                    if sorts[name] != s {
                        sorts.insert(name.clone(), s);
                        changed = true;
                    }
                }
                if !changed {
                    break sorts;
                }
            }
        })
    }

    pub fn constant_sort(&self, name: &str) -> Result<&BTreeSet<String>> {
        self.constant_sorts()
            .get(name)
            .ok_or_else(|| Error::UnresolvedConstant(name.to_string()))
    }
}

fn sort_with(term: &ProcTerm, consts: &BTreeMap<String, BTreeSet<String>>) -> BTreeSet<String> {
    match term {
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) => BTreeSet::new(),
        ProcTerm::Input {
            symbol, children, ..
        }
        | ProcTerm::Output {
            symbol, children, ..
        } => {
            let mut s: BTreeSet<String> = children.iter().flat_map(|c| sort_with(c, consts)).collect();
            s.insert(symbol.clone());
            s
        }
        ProcTerm::Graph(g) => g.vertices.iter().flat_map(|(_, p)| sort_with(p, consts)).collect(),
        ProcTerm::Sum(a, b) | ProcTerm::Cond(_, a, b) => {
            let mut s = sort_with(a, consts);
            s.extend(sort_with(b, consts));
            s
        }
        ProcTerm::Restrict(p, set) => sort_with(p, consts)
            .into_iter()
            .filter(|f| !set.contains(f))
            .collect(),
        ProcTerm::Const { name, renaming, .. } => consts
            .get(name)
            .map(|s| {
                s.iter()
                    .map(|f| renaming.get(f).unwrap_or(f).clone())
                    .collect()
            })
            .unwrap_or_default(),
    }
}

/// `Sort(P)`: the plain symbols a process may use.
pub fn sort_of(term: &ProcTerm, env: &DefEnv) -> Result<BTreeSet<String>> {
    let mut missing = None;
    term.visit(&mut |t| {
        if let ProcTerm::Const { name, .. } = t {
            if !env.contains(name) && missing.is_none() {
                missing = Some(name.clone());
            }
        }
    });
    if let Some(name) = missing {
        return Err(Error::UnresolvedConstant(name));
    }
    Ok(sort_with(term, env.constant_sorts()))
}

/// Applies a symbol renaming, respecting restriction binders and composing
/// into constant occurrences. Renaming entries on a constant are pruned to
/// the symbols its definition can actually use.
pub fn rename_symbols(term: &ProcTerm, map: &Renaming, env: &DefEnv) -> Result<ProcTerm> {
    if map.is_empty() {
        return Ok(term.clone());
    }
    let rename = |s: &String| map.get(s).unwrap_or(s).clone();
    Ok(match term {
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) => term.clone(),
        ProcTerm::Input {
            symbol,
            var,
            children,
        } => ProcTerm::Input {
            symbol: rename(symbol),
            var: var.clone(),
            children: children
                .iter()
                .map(|c| rename_symbols(c, map, env))
                .collect::<Result<_>>()?,
        },
        ProcTerm::Output {
            symbol,
            expr,
            children,
        } => ProcTerm::Output {
            symbol: rename(symbol),
            expr: expr.clone(),
            children: children
                .iter()
                .map(|c| rename_symbols(c, map, env))
                .collect::<Result<_>>()?,
        },
        ProcTerm::Graph(g) => ProcTerm::Graph(GraphTerm {
            vertices: g
                .vertices
                .iter()
                .map(|(n, p)| Ok((n.clone(), rename_symbols(p, map, env)?)))
                .collect::<Result<_>>()?,
            edges: g.edges.clone(),
        }),
        ProcTerm::Sum(a, b) => {
            ProcTerm::sum(rename_symbols(a, map, env)?, rename_symbols(b, map, env)?)
        }
        ProcTerm::Restrict(p, set) => {
            let inner: Renaming = map
                .iter()
                .filter(|(k, _)| !set.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            ProcTerm::Restrict(Box::new(rename_symbols(p, &inner, env)?), set.clone())
        }
        ProcTerm::Cond(b, p, q) => ProcTerm::cond(
            b.clone(),
            rename_symbols(p, map, env)?,
            rename_symbols(q, map, env)?,
        ),
        ProcTerm::Const {
            name,
            args,
            renaming,
        } => {
            let sort = env.constant_sort(name)?;
            let mut composed = Renaming::new();
            for f in sort {
                let once = renaming.get(f).unwrap_or(f);
                let twice = map.get(once).unwrap_or(once);
                if twice != f {
                    composed.insert(f.clone(), twice.clone());
                }
            }
            ProcTerm::Const {
                name: name.clone(),
                args: args.clone(),
                renaming: composed,
            }
        }
    })
}

/// Result of [`check_canonical`], strongest class first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "class")]
pub enum Classification {
    #[serde(rename = "CGS")]
    Cgs,
    #[serde(rename = "RCGS")]
    Rcgs,
    #[serde(rename = "CP")]
    Cp,
    NotCanonical { path: String, reason: String },
}

impl Classification {
    pub fn is_canonical(&self) -> bool {
        !matches!(self, Classification::NotCanonical { .. })
    }

    /// CGS or RCGS: fit to sit on a single location.
    pub fn is_guarded_sum(&self) -> bool {
        matches!(self, Classification::Cgs | Classification::Rcgs)
    }

    fn not(path: &[String], reason: impl Into<String>) -> Classification {
        Classification::NotCanonical {
            path: if path.is_empty() {
                "/".to_string()
            } else {
                path.join("/")
            },
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Cgs => f.write_str("CGS"),
            Classification::Rcgs => f.write_str("RCGS"),
            Classification::Cp => f.write_str("CP"),
            Classification::NotCanonical { path, reason } => {
                write!(f, "not canonical at {path}: {reason}")
            }
        }
    }
}

struct Frame {
    name: String,
    guards: usize,
    conds: usize,
}

struct Classifier<'a> {
    env: &'a DefEnv,
    memo: HashMap<String, Classification>,
    stack: Vec<Frame>,
    assumed_sums: Vec<String>,
}

impl Classifier<'_> {
    fn classify(
        &mut self,
        term: &ProcTerm,
        path: &mut Vec<String>,
        guards: usize,
        conds: usize,
    ) -> Result<Classification> {
        use Classification::*;
        match term {
            ProcTerm::Idle | ProcTerm::Nil => Ok(Cgs),
            ProcTerm::Var(_) => Ok(Cp),
            ProcTerm::Input {
                symbol, children, ..
            }
            | ProcTerm::Output {
                symbol, children, ..
            } => {
                if symbol == IDLE_SYMBOL {
                    return Ok(Classification::not(path, "`*` cannot be used as a prefix"));
                }
                let arity = self
                    .env
                    .arity(symbol)
                    .ok_or_else(|| Error::UnknownSymbol(symbol.clone()))?;
                if arity != children.len() {
                    return Err(Error::ArityMismatch {
                        symbol: symbol.clone(),
                        expected: arity,
                        found: children.len(),
                    });
                }
                for (i, child) in children.iter().enumerate() {
                    path.push(format!("{symbol}[{i}]"));
                    let c = self.classify(child, path, guards + 1, conds)?;
                    path.pop();
                    if !c.is_canonical() {
                        return Ok(c);
                    }
                }
                Ok(Cgs)
            }
            ProcTerm::Sum(a, b) => {
                for (side, t) in [("sum.left", a), ("sum.right", b)] {
                    path.push(side.to_string());
                    let c = self.classify(t, path, guards, conds)?;
                    if !c.is_canonical() {
                        return Ok(c);
                    }
                    if c != Cgs {
                        let r = Classification::not(path, format!("summand is {c}, not a guarded sum"));
                        path.pop();
                        return Ok(r);
                    }
                    path.pop();
                }
                Ok(Cgs)
            }
            ProcTerm::Cond(_, a, b) => {
                let mut all_cgs = true;
                for (side, t) in [("then", a), ("else", b)] {
                    path.push(side.to_string());
                    if let ProcTerm::Const { name, .. } = &**t {
                        if self.stack.iter().any(|f| &f.name == name) {
                            self.assumed_sums.push(name.clone());
                        }
                    }
                    let c = self.classify(t, path, guards, conds + 1)?;
                    if !c.is_canonical() {
                        return Ok(c);
                    }
                    if !c.is_guarded_sum() {
                        let r = Classification::not(path, "conditional branch is a process, not a guarded sum");
                        path.pop();
                        return Ok(r);
                    }
                    all_cgs &= c == Cgs;
                    path.pop();
                }
                Ok(if all_cgs { Cgs } else { Rcgs })
            }
            ProcTerm::Graph(g) => {
                let names: BTreeSet<&String> = g.vertices.iter().map(|(n, _)| n).collect();
                if names.len() != g.vertices.len() {
                    return Err(Error::Syntax("duplicate location in graph literal".into()));
                }
                for (a, b) in &g.edges {
                    if !names.contains(a) || !names.contains(b) {
                        return Err(Error::Syntax(format!("edge {a} -- {b} names an unknown location")));
                    }
                    if a == b {
                        return Err(Error::Syntax(format!("self-loop on location {a}")));
                    }
                }
                for (n, p) in &g.vertices {
                    path.push(format!("@{n}"));
                    let c = self.classify(p, path, guards, conds)?;
                    path.pop();
                    if !c.is_canonical() {
                        return Ok(c);
                    }
                }
                Ok(Cp)
            }
            ProcTerm::Restrict(p, set) => {
                if set.contains(IDLE_SYMBOL) {
                    return Ok(Classification::not(path, "`*` cannot be restricted"));
                }
                path.push("restrict".to_string());
                let c = self.classify(p, path, guards, conds)?;
                path.pop();
                Ok(if c.is_canonical() { Cp } else { c })
            }
            ProcTerm::Const { name, args, .. } => {
                let def = self
                    .env
                    .get(name)
                    .ok_or_else(|| Error::UnresolvedConstant(name.clone()))?;
                if def.params.len() != args.len() {
                    return Err(Error::ParamCount {
                        constant: name.clone(),
                        expected: def.params.len(),
                        found: args.len(),
                    });
                }
                if let Some(frame) = self.stack.iter().find(|f| &f.name == name) {
                    if guards > frame.guards || conds > frame.conds {
                        return Ok(Rcgs);
                    }
                    return Ok(Classification::not(path, format!("unguarded recursion through `{name}`")));
                }
                if let Some(c) = self.memo.get(name) {
                    return Ok(c.clone());
                }
                if let Some(c) = self.env.caches.classes.read().unwrap().get(name) {
                    return Ok(c.clone());
                }
                self.stack.push(Frame {
                    name: name.clone(),
                    guards,
                    conds,
                });
                path.push(format!("{name}="));
                let body = self.classify(&def.body, path, guards, conds)?;
                path.pop();
                self.stack.pop();
                let c = match body {
                    Cgs | Rcgs => Rcgs,
                    other => other,
                };
                self.memo.insert(name.clone(), c.clone());
                Ok(c)
            }
        }
    }
}

/// Classifies a term as a canonical guarded sum, a recursive canonical
/// guarded sum, a canonical process, or not canonical.
///
/// Two liberalisations: conditional branches may be constants (the result
/// is then RCGS), and graph locations may hold any canonical process, which
/// stands for the graph substitution `G[H/p]`.
pub fn check_canonical(term: &ProcTerm, env: &DefEnv) -> Result<Classification> {
    let mut classifier = Classifier {
        env,
        memo: HashMap::new(),
        stack: Vec::new(),
        assumed_sums: Vec::new(),
    };
    let mut path = Vec::new();
    let mut result = classifier.classify(term, &mut path, 0, 0)?;
    if result.is_canonical() {
        for name in &classifier.assumed_sums {
            if let Some(c) = classifier.memo.get(name) {
                if !c.is_guarded_sum() {
                    result = Classification::not(
                        std::slice::from_ref(name),
                        "recursive constant used as a guarded sum has a process body",
                    );
                    break;
                }
            }
        }
    }
    if result.is_canonical() {
        let mut cache = env.caches.classes.write().unwrap();
        for (name, c) in classifier.memo {
            cache.entry(name).or_insert(c);
        }
    }
    Ok(result)
}

fn needs_parens_in_sum(t: &ProcTerm) -> bool {
    matches!(t, ProcTerm::Cond(..) | ProcTerm::Restrict(..))
}

impl ProcTerm {
    fn fmt_child_list(children: &[ProcTerm], f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in children.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for ProcTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcTerm::Idle => f.write_str("*"),
            ProcTerm::Nil => f.write_str("0"),
            ProcTerm::Var(x) => f.write_str(x),
            ProcTerm::Input {
                symbol,
                var,
                children,
            } => {
                write!(f, "{symbol}({var}).")?;
                ProcTerm::fmt_child_list(children, f)
            }
            ProcTerm::Output {
                symbol,
                expr,
                children,
            } => {
                write!(f, "'{symbol}({expr}).")?;
                ProcTerm::fmt_child_list(children, f)
            }
            ProcTerm::Graph(g) => {
                f.write_str("graph { ")?;
                for (n, p) in &g.vertices {
                    write!(f, "{n}: {p}; ")?;
                }
                if !g.edges.is_empty() {
                    f.write_str("edges { ")?;
                    for (i, (a, b)) in g.edges.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{a} -- {b}")?;
                    }
                    f.write_str(" } ")?;
                }
                f.write_str("}")
            }
            ProcTerm::Sum(a, b) => {
                for (i, t) in [a, b].into_iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    if needs_parens_in_sum(t) {
                        write!(f, "({t})")?;
                    } else {
                        write!(f, "{t}")?;
                    }
                }
                Ok(())
            }
            ProcTerm::Restrict(p, set) => {
                let names: Vec<&str> = set.iter().map(String::as_str).collect();
                write!(f, "({p}) \\ {{{}}}", names.join(", "))
            }
            ProcTerm::Cond(b, p, q) => {
                write!(f, "if {b} then {p} else ")?;
                match &**q {
                    ProcTerm::Sum(..) | ProcTerm::Cond(..) | ProcTerm::Restrict(..) => {
                        write!(f, "({q})")
                    }
                    _ => write!(f, "{q}"),
                }
            }
            ProcTerm::Const {
                name,
                args,
                renaming,
            } => {
                f.write_str(name)?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_str(")")?;
                }
                if !renaming.is_empty() {
                    f.write_str("[")?;
                    for (i, (from, to)) in renaming.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{to}/{from}")?;
                    }
                    f.write_str("]")?;
                }
                Ok(())
            }
        }
    }
}
