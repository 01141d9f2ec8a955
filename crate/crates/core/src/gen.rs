//! Seeded random generators for canonical processes, process pairs, tree
//! automata and the trees they recognise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encodings::automata::{SigmaTree, Transition, TreeAutomaton};
use crate::error::Result;
use crate::expr::{Expr, Value};
use crate::parser::parse_program;
use crate::state::{flatten, NetState};
use crate::syntax::{DefEnv, ProcTerm};

pub const DEFAULT_SEED: u64 = 0x5eed_c0de;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_components: usize,
    pub max_depth: usize,
    pub values: Vec<i64>,
    /// Symbols with their arities.
    pub symbols: Vec<(&'static str, usize)>,
    /// Allow the looping constants of [`signature_env`].
    pub recursion: bool,
    /// Allow a restriction around the whole process.
    pub restriction: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_components: 4,
            max_depth: 2,
            values: vec![0, 1],
            symbols: vec![("f", 1), ("g", 1), ("h", 2)],
            recursion: true,
            restriction: true,
        }
    }
}

const LOOPS: &str = "
def Lf = 'f(0).(Lf);
def Lg = g(x).(Lg);
";

/// Declares the default symbols and a few looping constants.
pub fn signature_env(cfg: &GenConfig) -> DefEnv {
    let mut src: String = cfg.symbols.iter().map(|(s, a)| format!("symbol {s}/{a};\n")).collect();
    let default: Vec<(&str, usize)> = GenConfig::default().symbols;
    if cfg.recursion && default.iter().all(|d| cfg.symbols.contains(d)) {
        src.push_str(LOOPS);
    }
    parse_program(&src).expect("built-in signature parses").env
}

fn loops(cfg: &GenConfig) -> &'static [&'static str] {
    if cfg.recursion && GenConfig::default().symbols.iter().all(|d| cfg.symbols.contains(d)) {
        &["Lf", "Lg"]
    } else {
        &[]
    }
}

/// A canonical process that sits on one location.
pub fn gen_guarded_sum(rng: &mut impl Rng, cfg: &GenConfig, depth: usize, bound: Option<&str>) -> ProcTerm {
    let ls = loops(cfg);
    let roll = rng.gen_range(0..10);
    if depth == 0 || roll == 0 {
        return if rng.gen_bool(0.7) { ProcTerm::Idle } else { ProcTerm::Nil };
    }
    if roll == 1 && !ls.is_empty() {
        return ProcTerm::constant(ls.choose(rng).unwrap(), vec![]);
    }
    let summands = if rng.gen_bool(0.25) { 2 } else { 1 };
    let mut out = Vec::new();
    for _ in 0..summands {
        let &(sym, arity) = cfg.symbols.choose(rng).unwrap();
        let var = format!("x{depth}");
        let inner_bound = if rng.gen_bool(0.5) { Some(var.as_str()) } else { bound };
        let mut children = Vec::with_capacity(arity);
        for _ in 0..arity {
            children.push(gen_cp(rng, cfg, depth - 1, inner_bound));
        }
        if rng.gen_bool(0.5) {
            out.push(ProcTerm::input(sym, &var, children));
        } else {
            let payload = match bound {
                Some(x) if rng.gen_bool(0.4) => Expr::var(x),
                _ => Expr::int(*cfg.values.choose(rng).unwrap()),
            };
            // Children of an output cannot see the variable bound here.
            let children = children.into_iter().map(|c| close(c, &var, cfg, rng)).collect();
            out.push(ProcTerm::output(sym, payload, children));
        }
    }
    ProcTerm::sum_of(out)
}

fn close(t: ProcTerm, var: &str, cfg: &GenConfig, rng: &mut impl Rng) -> ProcTerm {
    if t.free_vars().contains(var) {
        let v = Value::Int(*cfg.values.choose(rng).unwrap());
        crate::syntax::subst_value(&t, var, &v)
    } else {
        t
    }
}

/// A canonical process: a guarded sum, or a small graph of them.
fn gen_cp(rng: &mut impl Rng, cfg: &GenConfig, depth: usize, bound: Option<&str>) -> ProcTerm {
    if depth > 0 && rng.gen_bool(0.15) {
        let a = gen_guarded_sum(rng, cfg, depth - 1, bound);
        let b = gen_guarded_sum(rng, cfg, depth - 1, bound);
        if rng.gen_bool(0.5) {
            ProcTerm::par(a, b)
        } else {
            ProcTerm::oplus(a, b)
        }
    } else {
        gen_guarded_sum(rng, cfg, depth, bound)
    }
}

/// Up to `max_components` guarded sums on a random graph.
pub fn gen_process(rng: &mut impl Rng, cfg: &GenConfig) -> ProcTerm {
    let n = rng.gen_range(1..=cfg.max_components.max(1));
    let parts: Vec<ProcTerm> = (0..n).map(|_| gen_guarded_sum(rng, cfg, cfg.max_depth, None)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.6) {
                edges.push((i, j));
            }
        }
    }
    let term = ProcTerm::compose(parts, &edges);
    if cfg.restriction && rng.gen_bool(0.2) {
        let &(sym, _) = cfg.symbols.choose(rng).unwrap();
        ProcTerm::restrict(term, &[sym])
    } else {
        term
    }
}

pub fn gen_state(rng: &mut impl Rng, cfg: &GenConfig, env: &DefEnv) -> Result<NetState> {
    flatten(&gen_process(rng, cfg), env)
}

/// Pairs mixing identical, slightly perturbed and independent processes.
pub fn gen_pair(rng: &mut impl Rng, cfg: &GenConfig, env: &DefEnv) -> Result<(NetState, NetState)> {
    let p = gen_process(rng, cfg);
    let q = match rng.gen_range(0..4) {
        0 => p.clone(),
        1 => ProcTerm::oplus(p.clone(), ProcTerm::Idle),
        2 => perturb(&p, rng, cfg),
        _ => gen_process(rng, cfg),
    };
    Ok((flatten(&p, env)?, flatten(&q, env)?))
}

/// Changes one output payload, if there is one.
fn perturb(p: &ProcTerm, rng: &mut impl Rng, cfg: &GenConfig) -> ProcTerm {
    let mut count = 0;
    p.visit(&mut |t| {
        if matches!(t, ProcTerm::Output { expr: Expr::Lit(_), .. }) {
            count += 1;
        }
    });
    if count == 0 {
        return ProcTerm::par(p.clone(), ProcTerm::Nil);
    }
    let target = rng.gen_range(0..count);
    let v = Value::Int(*cfg.values.choose(rng).unwrap() + 1);
    let mut seen = 0;
    rewrite_output(p, target, &v, &mut seen)
}

fn rewrite_output(t: &ProcTerm, target: usize, v: &Value, seen: &mut usize) -> ProcTerm {
    let rec = |c: &[ProcTerm], seen: &mut usize| -> Vec<ProcTerm> { c.iter().map(|x| rewrite_output(x, target, v, seen)).collect() };
    match t {
        ProcTerm::Output { symbol, expr, children } => {
            let hit = matches!(expr, Expr::Lit(_)) && *seen == target;
            if matches!(expr, Expr::Lit(_)) {
                *seen += 1;
            }
            let expr = if hit { Expr::Lit(v.clone()) } else { expr.clone() };
            ProcTerm::output(symbol, expr, rec(children, seen))
        }
        ProcTerm::Input { symbol, var, children } => ProcTerm::input(symbol, var, rec(children, seen)),
        ProcTerm::Sum(a, b) => {
            let a = rewrite_output(a, target, v, seen);
            ProcTerm::sum(a, rewrite_output(b, target, v, seen))
        }
        ProcTerm::Graph(g) => {
            let mut g = g.clone();
            for (_, p) in g.vertices.iter_mut() {
                *p = rewrite_output(p, target, v, seen);
            }
            ProcTerm::Graph(g)
        }
        ProcTerm::Restrict(p, s) => ProcTerm::Restrict(Box::new(rewrite_output(p, target, v, seen)), s.clone()),
        _ => t.clone(),
    }
}

/// A top-down automaton over the configured symbols, with at least one
/// final state.
pub fn gen_automaton(rng: &mut impl Rng, cfg: &GenConfig, states: usize) -> TreeAutomaton {
    let states = states.max(2);
    let names: Vec<String> = (0..states).map(|i| format!("Q{i}")).collect();
    let finals = rng.gen_range(1..states);
    let mut transitions = Vec::new();
    for (i, q) in names.iter().enumerate().take(states - finals) {
        let k = rng.gen_range(1..=2);
        for _ in 0..k {
            let &(sym, arity) = cfg.symbols.choose(rng).unwrap();
            // Bias targets towards later states so that recognition ends.
            let targets = (0..arity).map(|_| names[rng.gen_range(i..states)].clone()).collect();
            let t = Transition {
                from: q.clone(),
                symbol: sym.to_string(),
                targets,
            };
            if !transitions.contains(&t) {
                transitions.push(t);
            }
        }
    }
    TreeAutomaton::new("Aut", names, transitions).expect("generated automaton is well formed")
}

/// A random tree recognised at `q`, if one exists within `depth`.
pub fn gen_recognized_tree(rng: &mut impl Rng, aut: &TreeAutomaton, q: &str, depth: usize) -> Option<SigmaTree> {
    if aut.is_final(q) {
        return Some(SigmaTree::Leaf);
    }
    if depth == 0 {
        return None;
    }
    let mut options: Vec<&Transition> = aut.transitions_from(q).collect();
    options.shuffle(rng);
    'next: for t in options {
        let mut children = Vec::new();
        for qi in &t.targets {
            match gen_recognized_tree(rng, aut, qi, depth - 1) {
                Some(c) => children.push(c),
                None => continue 'next,
            }
        }
        return Some(SigmaTree::node(&t.symbol, children));
    }
    None
}
