//! Text front end: definition files with symbol declarations, constant
//! definitions, named processes, tree automata and tree literals.
//!
//! ```text
//! symbol f/2;
//! def A(x) = f(y).(A(x + y), *) + if x = 0 then 'g(x).(0) else 0;
//! process Main = graph { v1: A(1); v2: B; edges { v1 -- v2 } } \ {f};
//! automaton Aut { states Q, Q1; trans Q g (Q1); }
//! tree t = g(x).(*);
//! ```

use std::collections::BTreeMap;

use crate::encodings::automata::{SigmaTree, Transition, TreeAutomaton};
use crate::error::{Error, Result};
use crate::expr::{BinaryOp, Expr, UnaryOp, Value};
use crate::syntax::{DefEnv, GraphTerm, ProcTerm, Renaming, IDLE_SYMBOL};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

const PUNCTS: [&str; 29] = [
    "<+>", "--", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";", ":",
    ".", "'", "+", "|", "*", "=", "<", ">", "!", "-", "\\", "/",
];

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, column, message: String| Error::Parse {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let n = text
                .parse::<i64>()
                .map_err(|_| err(line, col, format!("integer literal `{text}` out of range")))?;
            col += i - start;
            out.push(Token {
                tok: Tok::Int(n),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '~')
            {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: start_line,
                column: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token {
                    tok: Tok::Punct(p),
                    line: start_line,
                    column: start_col,
                });
            }
            None => return Err(err(line, col, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

const KEYWORDS: [&str; 14] = [
    "symbol", "def", "process", "graph", "edges", "restrict", "if", "then", "else", "true",
    "false", "automaton", "tree", "trans",
];

const FUNCTIONS: [&str; 8] = ["fst", "snd", "head", "tail", "null", "append", "not", "neg"];

/// A parsed definition file.
#[derive(Debug, Clone, Default)]
pub struct Program {
    pub env: DefEnv,
    /// Constant names in definition order.
    pub definitions: Vec<String>,
    pub processes: Vec<(String, ProcTerm)>,
    pub automata: Vec<TreeAutomaton>,
    pub trees: Vec<(String, SigmaTree)>,
}

impl Program {
    /// A named process, or a parameterless constant of that name.
    pub fn process(&self, name: &str) -> Result<ProcTerm> {
        if let Some((_, p)) = self.processes.iter().find(|(n, _)| n == name) {
            return Ok(p.clone());
        }
        match self.env.get(name) {
            Some(def) if def.params.is_empty() => Ok(ProcTerm::constant(name, vec![])),
            _ => Err(Error::UnknownProcess(name.to_string())),
        }
    }

    pub fn automaton(&self, name: &str) -> Option<&TreeAutomaton> {
        self.automata.iter().find(|a| a.name == name)
    }

    pub fn tree(&self, name: &str) -> Option<&SigmaTree> {
        self.trees.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    arities: BTreeMap<String, usize>,
}

type PResult<T> = std::result::Result<T, Error>;

impl Parser {
    fn new(src: &str) -> Result<Parser> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            arities: BTreeMap::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(Error::Parse {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.error(format!("expected `{p}`, found {}", self.describe()))
        }
    }

    fn expect_keyword(&mut self, k: &str) -> PResult<()> {
        if self.is_keyword(k) {
            self.advance();
            Ok(())
        } else {
            self.error(format!("expected `{k}`, found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            _ => self.error(format!("expected an identifier, found {}", self.describe())),
        }
    }

    fn record_arity(&mut self, symbol: &str, arity: usize) -> PResult<()> {
        if symbol == IDLE_SYMBOL {
            return self.error("`*` cannot be used as a prefix symbol");
        }
        let base = crate::syntax::base_name(symbol).to_string();
        match self.arities.get(&base) {
            Some(&a) if a != arity => self.error(format!(
                "symbol `{base}` has arity {a} but is used with {arity} children"
            )),
            _ => {
                self.arities.insert(base, arity);
                Ok(())
            }
        }
    }

    // ---- processes ----

    fn process(&mut self) -> PResult<ProcTerm> {
        let mut left = self.sum()?;
        loop {
            if self.eat_punct("|") {
                left = ProcTerm::par(left, self.sum()?);
            } else if self.eat_punct("<+>") {
                left = ProcTerm::oplus(left, self.sum()?);
            } else {
                return Ok(left);
            }
        }
    }

    fn sum(&mut self) -> PResult<ProcTerm> {
        let mut left = self.postfix()?;
        while self.eat_punct("+") {
            left = ProcTerm::sum(left, self.postfix()?);
        }
        Ok(left)
    }

    fn postfix(&mut self) -> PResult<ProcTerm> {
        let mut p = self.atom()?;
        loop {
            if self.is_punct("\\") || self.is_keyword("restrict") {
                self.advance();
                let set = self.symbol_set()?;
                p = ProcTerm::Restrict(Box::new(p), set);
            } else {
                return Ok(p);
            }
        }
    }

    fn symbol_set(&mut self) -> PResult<std::collections::BTreeSet<String>> {
        self.expect_punct("{")?;
        let mut set = std::collections::BTreeSet::new();
        if !self.is_punct("}") {
            loop {
                set.insert(self.ident()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct("}")?;
        Ok(set)
    }

    fn atom(&mut self) -> PResult<ProcTerm> {
        match self.peek().clone() {
            Tok::Punct("*") => {
                self.advance();
                Ok(ProcTerm::Idle)
            }
            Tok::Int(0) => {
                self.advance();
                Ok(ProcTerm::Nil)
            }
            Tok::Punct("(") => {
                self.advance();
                let p = self.process()?;
                self.expect_punct(")")?;
                Ok(p)
            }
            Tok::Punct("'") => {
                self.advance();
                let symbol = self.ident()?;
                self.expect_punct("(")?;
                let exprs = self.expr_list(")")?;
                let expr = match tuple(exprs) {
                    Some(e) => e,
                    None => return self.error("an output prefix needs a payload expression"),
                };
                self.expect_punct(".")?;
                let children = self.children()?;
                self.record_arity(&symbol, children.len())?;
                Ok(ProcTerm::Output {
                    symbol,
                    expr,
                    children,
                })
            }
            Tok::Ident(k) if k == "if" => {
                self.advance();
                let b = self.expr()?;
                self.expect_keyword("then")?;
                let then = self.process()?;
                self.expect_keyword("else")?;
                let otherwise = self.postfix()?;
                Ok(ProcTerm::cond(b, then, otherwise))
            }
            Tok::Ident(k) if k == "graph" => {
                self.advance();
                self.graph()
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if !self.is_punct("(") {
                    let renaming = self.renaming()?;
                    if renaming.is_empty() {
                        return Ok(ProcTerm::Var(name));
                    }
                    return Ok(ProcTerm::Const {
                        name,
                        args: vec![],
                        renaming,
                    });
                }
                self.advance();
                let args = self.expr_list(")")?;
                if self.eat_punct(".") {
                    let var = match args.as_slice() {
                        [Expr::Var(x)] => x.clone(),
                        _ => {
                            return self.error(format!(
                                "input prefix `{name}(...)` must bind exactly one variable"
                            ))
                        }
                    };
                    let children = self.children()?;
                    self.record_arity(&name, children.len())?;
                    return Ok(ProcTerm::Input {
                        symbol: name,
                        var,
                        children,
                    });
                }
                let renaming = self.renaming()?;
                Ok(ProcTerm::Const {
                    name,
                    args,
                    renaming,
                })
            }
            _ => self.error(format!("expected a process, found {}", self.describe())),
        }
    }

    fn renaming(&mut self) -> PResult<Renaming> {
        let mut map = Renaming::new();
        if !self.eat_punct("[") {
            return Ok(map);
        }
        loop {
            let to = self.ident()?;
            self.expect_punct("/")?;
            let from = self.ident()?;
            map.insert(from, to);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct("]")?;
        Ok(map)
    }

    fn children(&mut self) -> PResult<Vec<ProcTerm>> {
        if self.eat_punct("(") {
            let mut out = vec![self.process()?];
            while self.eat_punct(",") {
                out.push(self.process()?);
            }
            self.expect_punct(")")?;
            Ok(out)
        } else {
            Ok(vec![self.postfix()?])
        }
    }

    fn graph(&mut self) -> PResult<ProcTerm> {
        self.expect_punct("{")?;
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        while !self.is_punct("}") {
            if self.is_keyword("edges") {
                self.advance();
                self.expect_punct("{")?;
                while !self.is_punct("}") {
                    let a = self.vertex_name()?;
                    self.expect_punct("--")?;
                    let b = self.vertex_name()?;
                    edges.push((a, b));
                    if !self.eat_punct(",") && !self.eat_punct(";") {
                        break;
                    }
                }
                self.expect_punct("}")?;
                self.eat_punct(";");
                continue;
            }
            let name = self.vertex_name()?;
            if vertices.iter().any(|(n, _)| n == &name) {
                return self.error(format!("duplicate location `{name}`"));
            }
            self.expect_punct(":")?;
            let p = self.process()?;
            vertices.push((name, p));
            if !self.eat_punct(";") {
                break;
            }
        }
        self.expect_punct("}")?;
        for (a, b) in &edges {
            for v in [a, b] {
                if !vertices.iter().any(|(n, _)| n == v) {
                    return self.error(format!("edge names unknown location `{v}`"));
                }
            }
            if a == b {
                return self.error(format!("self-loop on location `{a}`"));
            }
        }
        Ok(ProcTerm::Graph(GraphTerm { vertices, edges }))
    }

    fn vertex_name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(n.to_string())
            }
            _ => self.ident(),
        }
    }

    // ---- expressions ----

    fn expr_list(&mut self, close: &str) -> PResult<Vec<Expr>> {
        let mut out = Vec::new();
        if self.eat_punct(close) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(close)?;
        Ok(out)
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_punct("||") {
            left = Expr::binary(BinaryOp::Or, left, self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.cmp_expr()?;
        while self.eat_punct("&&") {
            left = Expr::binary(BinaryOp::And, left, self.cmp_expr()?);
        }
        Ok(left)
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let left = self.add_expr()?;
        let op = match self.peek() {
            Tok::Punct("=") | Tok::Punct("==") => Some((BinaryOp::Eq, false)),
            Tok::Punct("!=") => Some((BinaryOp::Ne, false)),
            Tok::Punct("<") => Some((BinaryOp::Lt, false)),
            Tok::Punct("<=") => Some((BinaryOp::Le, false)),
            Tok::Punct(">") => Some((BinaryOp::Lt, true)),
            Tok::Punct(">=") => Some((BinaryOp::Le, true)),
            _ => None,
        };
        match op {
            None => Ok(left),
            Some((op, swap)) => {
                self.advance();
                let right = self.add_expr()?;
                Ok(if swap {
                    Expr::binary(op, right, left)
                } else {
                    Expr::binary(op, left, right)
                })
            }
        }
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut left = self.mul_expr()?;
        loop {
            if self.eat_punct("+") {
                left = Expr::binary(BinaryOp::Add, left, self.mul_expr()?);
            } else if self.eat_punct("-") {
                left = Expr::binary(BinaryOp::Sub, left, self.mul_expr()?);
            } else {
                return Ok(left);
            }
        }
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut left = self.unary_expr()?;
        while self.eat_punct("*") {
            left = Expr::binary(BinaryOp::Mul, left, self.unary_expr()?);
        }
        Ok(left)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.eat_punct("!") {
            return Ok(Expr::unary(UnaryOp::Not, self.unary_expr()?));
        }
        if self.eat_punct("-") {
            if let Tok::Int(n) = *self.peek() {
                self.advance();
                return Ok(Expr::int(-n));
            }
            return Ok(Expr::unary(UnaryOp::Neg, self.unary_expr()?));
        }
        self.primary_expr()
    }

    fn primary_expr(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::int(n))
            }
            Tok::Punct("(") => {
                self.advance();
                let items = self.expr_list(")")?;
                match tuple(items) {
                    Some(e) => Ok(e),
                    None => self.error("empty parentheses in expression"),
                }
            }
            Tok::Punct("[") => {
                self.advance();
                let items = self.expr_list("]")?;
                Ok(Expr::List(items).fold())
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.advance();
                Ok(Expr::Lit(Value::Bool(s == "true")))
            }
            Tok::Ident(s) if FUNCTIONS.contains(&s.as_str()) && *self.peek_at(1) == Tok::Punct("(") => {
                self.advance();
                self.advance();
                let args = self.expr_list(")")?;
                let unary = |op| -> PResult<Expr> {
                    match <[Expr; 1]>::try_from(args.clone()) {
                        Ok([a]) => Ok(Expr::unary(op, a)),
                        Err(_) => self.error(format!("`{s}` takes one argument")),
                    }
                };
                match s.as_str() {
                    "fst" => unary(UnaryOp::Fst),
                    "snd" => unary(UnaryOp::Snd),
                    "head" => unary(UnaryOp::Head),
                    "tail" => unary(UnaryOp::Tail),
                    "null" => unary(UnaryOp::Null),
                    "not" => unary(UnaryOp::Not),
                    "neg" => unary(UnaryOp::Neg),
                    _ => match <[Expr; 2]>::try_from(args) {
                        Ok([a, b]) => Ok(Expr::binary(BinaryOp::Append, a, b)),
                        Err(_) => self.error("`append` takes two arguments"),
                    },
                }
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                if s.starts_with(|c: char| c.is_uppercase()) {
                    Ok(Expr::Lit(Value::Atom(s)))
                } else {
                    Ok(Expr::Var(s))
                }
            }
            _ => self.error(format!("expected an expression, found {}", self.describe())),
        }
    }

    // ---- declarations ----

    fn program(&mut self) -> PResult<Program> {
        let mut env = DefEnv::new();
        let mut definitions = Vec::new();
        let mut processes: Vec<(String, ProcTerm)> = Vec::new();
        let mut bodies: Vec<(String, Vec<String>, ProcTerm)> = Vec::new();
        let mut automata = Vec::new();
        let mut trees = Vec::new();
        while *self.peek() != Tok::Eof {
            if self.eat_punct(";") {
                continue;
            }
            let Tok::Ident(kw) = self.peek().clone() else {
                return self.error(format!("expected a declaration, found {}", self.describe()));
            };
            match kw.as_str() {
                "symbol" => {
                    self.advance();
                    loop {
                        let name = self.ident()?;
                        self.expect_punct("/")?;
                        let arity = match self.advance() {
                            Tok::Int(n) if n > 0 => n as usize,
                            _ => return self.error("symbol arity must be a positive integer"),
                        };
                        if let Some(&a) = self.arities.get(&name) {
                            if a != arity {
                                return self.error(format!("symbol `{name}` redeclared with arity {arity}"));
                            }
                        }
                        self.arities.insert(name, arity);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                    self.expect_punct(";")?;
                }
                "def" => {
                    self.advance();
                    let name = self.ident()?;
                    let mut params = Vec::new();
                    if self.eat_punct("(") && !self.eat_punct(")") {
                        loop {
                            params.push(self.ident()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                        self.expect_punct(")")?;
                    }
                    self.expect_punct("=")?;
                    let body = self.process()?;
                    self.expect_punct(";")?;
                    if bodies.iter().any(|(n, _, _)| n == &name) {
                        return self.error(format!("constant `{name}` defined twice"));
                    }
                    definitions.push(name.clone());
                    bodies.push((name, params, body));
                }
                "process" => {
                    self.advance();
                    let name = self.ident()?;
                    self.expect_punct("=")?;
                    let p = self.process()?;
                    self.expect_punct(";")?;
                    processes.push((name, p));
                }
                "automaton" => {
                    self.advance();
                    automata.push(self.automaton()?);
                }
                "tree" => {
                    self.advance();
                    let name = self.ident()?;
                    self.expect_punct("=")?;
                    let t = self.process()?;
                    self.expect_punct(";")?;
                    match SigmaTree::from_process(&t) {
                        Some(tree) => trees.push((name, tree)),
                        None => return self.error("a tree literal uses only `f(x).(...)` nodes and `*` leaves"),
                    }
                }
                _ => return self.error(format!("expected a declaration, found `{kw}`")),
            }
        }
        for (name, arity) in &self.arities {
            env.declare_symbol(name, *arity)?;
        }
        let defined: BTreeMap<String, usize> =
            bodies.iter().map(|(n, p, _)| (n.clone(), p.len())).collect();
        for (name, params, body) in bodies {
            let params: Vec<&str> = params.iter().map(String::as_str).collect();
            env.define(&name, &params, resolve_vars(&body, &defined))?;
        }
        for (_, p) in processes.iter_mut() {
            *p = resolve_vars(p, &defined);
        }
        Ok(Program {
            env,
            definitions,
            processes,
            automata,
            trees,
        })
    }

    fn automaton(&mut self) -> PResult<TreeAutomaton> {
        let name = self.ident()?;
        self.expect_punct("{")?;
        let mut states = Vec::new();
        let mut transitions = Vec::new();
        while !self.eat_punct("}") {
            if self.is_keyword("states") {
                self.advance();
                loop {
                    states.push(self.ident()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            } else if self.is_keyword("trans") {
                self.advance();
                let from = self.ident()?;
                let symbol = self.ident()?;
                self.expect_punct("(")?;
                let mut targets = Vec::new();
                loop {
                    targets.push(self.ident()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                self.record_arity(&symbol, targets.len())?;
                transitions.push(Transition {
                    from,
                    symbol,
                    targets,
                });
            } else {
                return self.error(format!("expected `states` or `trans`, found {}", self.describe()));
            }
        }
        TreeAutomaton::new(&name, states, transitions).or_else(|e| self.error(e.to_string()))
    }
}

/// Right-nested pairs for more than one expression.
fn tuple(mut items: Vec<Expr>) -> Option<Expr> {
    let last = items.pop()?;
    Some(
        items
            .into_iter()
            .rev()
            .fold(last, |acc, e| Expr::Pair(Box::new(e), Box::new(acc))),
    )
}

/// Bare names that are defined constants become constant occurrences.
fn resolve_vars(term: &ProcTerm, defined: &BTreeMap<String, usize>) -> ProcTerm {
    let rec = |t: &ProcTerm| resolve_vars(t, defined);
    match term {
        ProcTerm::Var(x) if defined.contains_key(x) => ProcTerm::constant(x, vec![]),
        ProcTerm::Idle | ProcTerm::Nil | ProcTerm::Var(_) | ProcTerm::Const { .. } => term.clone(),
        ProcTerm::Input {
            symbol,
            var,
            children,
        } => ProcTerm::Input {
            symbol: symbol.clone(),
            var: var.clone(),
            children: children.iter().map(rec).collect(),
        },
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
        ProcTerm::Restrict(p, s) => ProcTerm::Restrict(Box::new(rec(p)), s.clone()),
        ProcTerm::Cond(b, p, q) => ProcTerm::cond(b.clone(), rec(p), rec(q)),
    }
}

pub fn parse_program(src: &str) -> Result<Program> {
    let mut p = Parser::new(src)?;
    p.program()
}

/// Parses one process term against an existing environment. Symbols must be
/// declared in `env` or used with consistent arity.
pub fn parse_process(src: &str, env: &DefEnv) -> Result<ProcTerm> {
    let mut p = Parser::new(src)?;
    for (name, arity) in env.symbols() {
        p.arities.insert(name.clone(), *arity);
    }
    let t = p.process()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after process", p.describe()));
    }
    let defined: BTreeMap<String, usize> = env
        .definitions()
        .map(|(n, d)| (n.clone(), d.params.len()))
        .collect();
    Ok(resolve_vars(&t, &defined))
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after expression", p.describe()));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::eval_expr;
    use crate::syntax::{check_canonical, Classification};

    #[test]
    fn parses_prefixes_and_constants() {
        let prog = parse_program(
            "symbol f/1; # comment\n def A(x) = f(y).(A(x + y)) + 'g(x).(*);\n process Main = A(1) | A(2);",
        )
        .unwrap();
        assert_eq!(prog.definitions, vec!["A"]);
        let main = prog.process("Main").unwrap();
        assert_eq!(check_canonical(&main, &prog.env).unwrap(), Classification::Cp);
        assert_eq!(prog.env.arity("g"), Some(1));
    }

    #[test]
    fn pairs_and_atoms_in_payloads() {
        let prog = parse_program("def P(b) = 'ack(Ack, 1 - b).(0);").unwrap();
        let body = &prog.env.get("P").unwrap().body;
        assert_eq!(body.to_string(), "'ack((Ack, 1 - b)).(0)");
        let e = parse_expr("snd((Ack, 0))").unwrap();
        assert_eq!(eval_expr(&e).unwrap(), Value::Int(0));
        assert_eq!(eval_expr(&parse_expr("append([], 5)").unwrap()).unwrap(), Value::List(vec![Value::Int(5)]));
    }

    #[test]
    fn else_branch_binds_tighter_than_sum() {
        let prog = parse_program("def S = if true then 'f(1).(*) else 0 + g(x).(*);").unwrap();
        match &prog.env.get("S").unwrap().body {
            ProcTerm::Sum(a, _) => assert!(matches!(**a, ProcTerm::Cond(..))),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn graphs_and_restriction() {
        let prog = parse_program(
            "process M = graph { v1: 'f(1).(*); v2: f(x).(*); v3: *; edges { v1 -- v2 } } restrict {f};",
        )
        .unwrap();
        match prog.process("M").unwrap() {
            ProcTerm::Restrict(inner, set) => {
                assert!(set.contains("f"));
                assert!(matches!(*inner, ProcTerm::Graph(ref g) if g.vertices.len() == 3 && g.edges.len() == 1));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn errors_carry_positions() {
        match parse_program("def A = f(x).(*);\ndef B = f(x).(*, *);") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_program("def A = f(x).(\n  @);") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn display_reparses() {
        let prog = parse_program(
            "def A(x) = if x = (Ack, 1) then 'f(head([1, 2])).(A(x)) else g(y).(*, 0) + 0;",
        )
        .unwrap();
        let body = prog.env.get("A").unwrap().body.clone();
        let again = parse_process(&body.to_string(), &prog.env).unwrap();
        assert_eq!(again, body);
    }

    #[test]
    fn automata_and_trees() {
        let prog = parse_program(
            "automaton Aut { states Q, Q1; trans Q g (Q1); }\n tree t = g(x).(*);",
        )
        .unwrap();
        assert_eq!(prog.automaton("Aut").unwrap().transitions.len(), 1);
        assert!(prog.tree("t").is_some());
    }
}
