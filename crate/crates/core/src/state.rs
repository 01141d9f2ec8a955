//! Runtime states: one location graph, one recursive guarded sum per
//! location, and a global set of restricted symbols.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde_json::json;

use crate::error::{Error, Result};
use crate::expr::{eval_bexpr, eval_expr, Value};
use crate::graph::{canonical_form, Canonical, Loc, LocGraph, ResidualMap, DEFAULT_CANON_LEAVES};
use crate::parser::parse_process;
use crate::syntax::{
    base_name, check_canonical, is_fresh_name, normalize, rename_symbols, subst_value,
    Classification, DefEnv, Polarity, ProcTerm, Renaming, Symbol, FRESH_MARK,
};

/// Unfolding budget for a single head computation.
const HEAD_FUEL: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Head {
    Input {
        symbol: String,
        var: String,
        children: Vec<ProcTerm>,
    },
    Output {
        symbol: String,
        value: Value,
        children: Vec<ProcTerm>,
    },
    Nil,
    Idle,
}

impl Head {
    /// Children with the received value substituted for inputs.
    pub fn children_with(&self, v: &Value) -> Vec<ProcTerm> {
        match self {
            Head::Input { var, children, .. } => {
                children.iter().map(|c| subst_value(c, var, v)).collect()
            }
            Head::Output { children, .. } => children.clone(),
            Head::Nil | Head::Idle => Vec::new(),
        }
    }

    pub fn barb(&self, env: &DefEnv) -> Option<Symbol> {
        let (symbol, polarity) = match self {
            Head::Input { symbol, .. } => (symbol, Polarity::Plain),
            Head::Output { symbol, .. } => (symbol, Polarity::Co),
            _ => return None,
        };
        Some(Symbol::new(symbol, env.arity(symbol).unwrap_or(0), polarity))
    }
}

/// The summands of `cs(S)`, left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct HeadForm {
    pub summands: Vec<Head>,
}

impl HeadForm {
    pub fn is_idle(&self) -> bool {
        self.summands == [Head::Idle]
    }
}

/// `cs(S)`: resolves conditionals and unfolds constants until every summand
/// is a prefix, `0` or `∗`; output payloads are evaluated.
pub fn cs_head(term: &ProcTerm, env: &DefEnv) -> Result<Arc<HeadForm>> {
    if let Some(h) = env.caches.heads.read().unwrap().get(term) {
        return Ok(h.clone());
    }
    let mut summands = Vec::new();
    let mut fuel = HEAD_FUEL;
    expand_heads(term, env, &mut fuel, &mut summands)?;
    let form = Arc::new(HeadForm { summands });
    env.caches
        .heads
        .write()
        .unwrap()
        .insert(term.clone(), form.clone());
    Ok(form)
}

fn expand_heads(term: &ProcTerm, env: &DefEnv, fuel: &mut usize, out: &mut Vec<Head>) -> Result<()> {
    let mut stack = vec![term.clone()];
    while let Some(t) = stack.pop() {
        match t {
            ProcTerm::Idle => out.push(Head::Idle),
            ProcTerm::Nil => out.push(Head::Nil),
            ProcTerm::Input {
                symbol,
                var,
                children,
            } => out.push(Head::Input {
                symbol,
                var,
                children,
            }),
            ProcTerm::Output {
                symbol,
                expr,
                children,
            } => out.push(Head::Output {
                symbol,
                value: eval_expr(&expr)?,
                children,
            }),
            ProcTerm::Sum(a, b) => {
                stack.push(*b);
                stack.push(*a);
            }
            ProcTerm::Cond(b, p, q) => stack.push(if eval_bexpr(&b)? { *p } else { *q }),
            ProcTerm::Const {
                name,
                args,
                renaming,
            } => {
                if *fuel == 0 {
                    return Err(Error::GuardViolation(name));
                }
                *fuel -= 1;
                stack.push(env.unfold(&name, &args, &renaming)?);
            }
            ProcTerm::Var(x) => return Err(Error::ProcessVariable(x)),
            ProcTerm::Graph(_) | ProcTerm::Restrict(..) => {
                return Err(Error::NotCanonical {
                    path: "/".into(),
                    reason: format!("`{t}` is a process, not a guarded sum"),
                })
            }
        }
    }
    Ok(())
}

/// Barbs of one component: input heads give `g`, output heads give `ḡ`.
pub fn barbs_of_component(term: &ProcTerm, env: &DefEnv) -> Result<BTreeSet<Symbol>> {
    Ok(cs_head(term, env)?
        .summands
        .iter()
        .filter_map(|h| h.barb(env))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetState {
    pub graph: LocGraph,
    pub comp: BTreeMap<Loc, ProcTerm>,
    pub restricted: BTreeSet<String>,
    next_loc: Loc,
    next_name: u64,
}

/// Result of firing a set of prefixes at once.
#[derive(Debug, Clone)]
pub struct Fired {
    pub target: NetState,
    pub residual: ResidualMap,
    /// For each participant, the location set of each child.
    pub families: Vec<Vec<BTreeSet<Loc>>>,
}

/// A state relabelled to locations `0..n` with restricted symbols renamed by
/// first appearance.
#[derive(Debug, Clone)]
pub struct CanonState {
    pub key: String,
    pub state: NetState,
    /// Original location → canonical location.
    pub relabel: BTreeMap<Loc, Loc>,
}

impl NetState {
    pub fn empty() -> NetState {
        NetState {
            graph: LocGraph::new(),
            comp: BTreeMap::new(),
            restricted: BTreeSet::new(),
            next_loc: 1,
            next_name: 1,
        }
    }

    /// Builds a state directly from its parts. Components are normalised,
    /// restricted symbols are alpha-converted to fresh names.
    pub fn from_parts(
        graph: LocGraph,
        comp: BTreeMap<Loc, ProcTerm>,
        restricted: BTreeSet<String>,
        env: &DefEnv,
    ) -> Result<NetState> {
        let verts: BTreeSet<Loc> = graph.vertices().collect();
        let keys: BTreeSet<Loc> = comp.keys().copied().collect();
        if verts != keys {
            return Err(Error::Graph("components must cover exactly the graph's locations".into()));
        }
        for (loc, t) in &comp {
            let c = check_canonical(t, env)?;
            if !c.is_guarded_sum() {
                return Err(Error::NotCanonical {
                    path: format!("@{loc}"),
                    reason: format!("component is {c}, expected a guarded sum"),
                });
            }
            if !t.is_data_closed() {
                return Err(Error::OpenTerm(format!("{t}")));
            }
        }
        let mut st = NetState {
            next_loc: graph.max_vertex().map_or(1, |m| m + 1),
            graph,
            comp,
            restricted: BTreeSet::new(),
            next_name: 1,
        };
        st.next_name = st.max_fresh_counter() + 1;
        let mut ren = Renaming::new();
        for f in restricted {
            if is_fresh_name(&f) {
                st.restricted.insert(f);
            } else {
                let fresh = st.fresh_name(&f);
                ren.insert(f, fresh.clone());
                st.restricted.insert(fresh);
            }
        }
        let comp = std::mem::take(&mut st.comp);
        st.comp = comp
            .into_iter()
            .map(|(l, t)| Ok((l, normalize(&rename_symbols(&t, &ren, env)?))))
            .collect::<Result<_>>()?;
        st.gc_restricted();
        Ok(st)
    }

    fn max_fresh_counter(&self) -> u64 {
        let mut max = 0;
        for t in self.comp.values() {
            for s in t.written_symbols().iter().chain(self.restricted.iter()) {
                if let Some((_, n)) = s.split_once(FRESH_MARK) {
                    max = max.max(n.parse().unwrap_or(0));
                }
            }
        }
        max
    }

    fn fresh_loc(&mut self) -> Loc {
        let l = self.next_loc;
        self.next_loc += 1;
        l
    }

    fn fresh_name(&mut self, f: &str) -> String {
        let n = self.next_name;
        self.next_name += 1;
        format!("{}{FRESH_MARK}{n}", base_name(f))
    }

    pub fn locations(&self) -> impl Iterator<Item = Loc> + '_ {
        self.graph.vertices()
    }

    pub fn len(&self) -> usize {
        self.comp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comp.is_empty()
    }

    pub fn component(&self, loc: Loc) -> Option<&ProcTerm> {
        self.comp.get(&loc)
    }

    pub fn heads(&self, loc: Loc, env: &DefEnv) -> Result<Arc<HeadForm>> {
        let t = self
            .comp
            .get(&loc)
            .ok_or_else(|| Error::Graph(format!("no location {loc}")))?;
        cs_head(t, env)
    }

    /// `symb` is hidden by the restriction set.
    pub fn is_restricted(&self, symbol: &str) -> bool {
        self.restricted.contains(symbol)
    }

    /// Every component is `∗`.
    pub fn is_idle(&self, env: &DefEnv) -> Result<bool> {
        for loc in self.comp.keys() {
            if !self.heads(*loc, env)?.is_idle() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn gc_restricted(&mut self) {
        let used: BTreeSet<String> = self
            .comp
            .values()
            .flat_map(|t| t.written_symbols())
            .collect();
        self.restricted.retain(|f| used.contains(f));
    }

    /// Expands a canonical process into fresh locations, returning the graph
    /// fragment. Components are recorded in `self.comp`.
    fn build(&mut self, term: &ProcTerm, ren: &Renaming, env: &DefEnv) -> Result<LocGraph> {
        match term {
            ProcTerm::Graph(g) => {
                let mut frags: BTreeMap<&str, LocGraph> = BTreeMap::new();
                let mut out = LocGraph::new();
                for (name, p) in &g.vertices {
                    let frag = self.build(p, ren, env)?;
                    out = out.oplus(&frag, &[])?;
                    frags.insert(name.as_str(), frag);
                }
                for (a, b) in &g.edges {
                    let (fa, fb) = match (frags.get(a.as_str()), frags.get(b.as_str())) {
                        (Some(fa), Some(fb)) => (fa, fb),
                        _ => return Err(Error::Syntax(format!("edge {a} -- {b} names an unknown location"))),
                    };
                    for x in fa.vertices() {
                        for y in fb.vertices() {
                            out.add_edge(x, y)?;
                        }
                    }
                }
                Ok(out)
            }
            ProcTerm::Restrict(p, set) => {
                let mut inner = ren.clone();
                for f in set {
                    let fresh = self.fresh_name(f);
                    inner.insert(f.clone(), fresh.clone());
                    self.restricted.insert(fresh);
                }
                self.build(p, &inner, env)
            }
            ProcTerm::Var(x) => Err(Error::ProcessVariable(x.clone())),
            ProcTerm::Const {
                name,
                args,
                renaming,
            } => {
                if check_canonical(term, env)?.is_guarded_sum() {
                    self.vertex(term, ren, env)
                } else {
                    let body = env.unfold(name, args, renaming)?;
                    self.build(&body, ren, env)
                }
            }
            _ => self.vertex(term, ren, env),
        }
    }

    fn vertex(&mut self, term: &ProcTerm, ren: &Renaming, env: &DefEnv) -> Result<LocGraph> {
        let loc = self.fresh_loc();
        let t = normalize(&rename_symbols(term, ren, env)?);
        self.comp.insert(loc, t);
        let mut g = LocGraph::new();
        g.add_vertex(loc);
        Ok(g)
    }

    /// Fires the given participants at once: each location is replaced by
    /// the `⊕` of its (already instantiated) children. Two new locations are
    /// adjacent iff they come from the same child and are adjacent there, or
    /// come from distinct participants that were adjacent. New locations
    /// inherit the old neighbours of their participant.
    pub fn fire(&self, parts: &[(Loc, Vec<ProcTerm>)], env: &DefEnv) -> Result<Fired> {
        let mut t = self.clone();
        let part_locs: BTreeSet<Loc> = parts.iter().map(|(p, _)| *p).collect();
        if part_locs.len() != parts.len() {
            return Err(Error::InvalidTransition("a location fires at most once per step".into()));
        }
        for p in &part_locs {
            if t.comp.remove(p).is_none() {
                return Err(Error::InvalidTransition(format!("no location {p}")));
            }
        }
        let keep: BTreeSet<Loc> = self.graph.vertices().filter(|v| !part_locs.contains(v)).collect();
        let mut graph = self.graph.induced(&keep);
        let mut residual: ResidualMap = keep.iter().map(|&v| (v, v)).collect();
        let mut families = Vec::with_capacity(parts.len());
        let mut origin: Vec<(Loc, Vec<Loc>)> = Vec::new();
        for (p, children) in parts {
            let mut family = Vec::with_capacity(children.len());
            let mut news = Vec::new();
            for child in children {
                let frag = t.build(child, &Renaming::new(), env)?;
                graph = graph.oplus(&frag, &[])?;
                let locs: BTreeSet<Loc> = frag.vertices().collect();
                for &l in &locs {
                    residual.insert(l, *p);
                    for n in self.graph.neighbors(*p) {
                        if keep.contains(&n) {
                            graph.add_edge(l, n)?;
                        }
                    }
                }
                news.extend(locs.iter().copied());
                family.push(locs);
            }
            families.push(family);
            origin.push((*p, news));
        }
        for (i, (p, a)) in origin.iter().enumerate() {
            for (q, b) in &origin[i + 1..] {
                if self.graph.adjacent(*p, *q) {
                    for &x in a {
                        for &y in b {
                            graph.add_edge(x, y)?;
                        }
                    }
                }
            }
        }
        t.graph = graph;
        t.gc_restricted();
        Ok(Fired {
            target: t,
            residual,
            families,
        })
    }

    /// Per-location barbs with restricted symbols removed, in location order.
    pub fn barb_signature(&self, env: &DefEnv) -> Result<Vec<(Loc, BTreeSet<Symbol>)>> {
        self.comp
            .iter()
            .map(|(loc, t)| {
                let barbs = barbs_of_component(t, env)?
                    .into_iter()
                    .filter(|s| !self.is_restricted(&s.name))
                    .collect();
                Ok((*loc, barbs))
            })
            .collect()
    }

    /// `Q↓B`: distinct locations exhibit the symbols of `B`, none restricted.
    pub fn has_barb(&self, b: &BTreeSet<Symbol>, env: &DefEnv) -> Result<bool> {
        let sig: Vec<BTreeSet<Symbol>> = self.barb_signature(env)?.into_iter().map(|(_, s)| s).collect();
        Ok(barb_satisfiable(&sig, b))
    }

    fn anonymous_colors(&self) -> (BTreeMap<Loc, String>, BTreeMap<Loc, String>) {
        let exact: BTreeMap<Loc, String> = self.comp.iter().map(|(l, t)| (*l, t.to_string())).collect();
        let anon = exact
            .iter()
            .map(|(l, s)| (*l, rename_fresh_tokens(s, &mut |base, _| format!("{base}{FRESH_MARK}"))))
            .collect();
        (anon, exact)
    }

    pub fn canonical_key(&self) -> Result<String> {
        Ok(self.canonical_labelling()?.0.key)
    }

    fn canonical_labelling(&self) -> Result<(Canonical, BTreeMap<Loc, String>)> {
        let (anon, exact) = self.anonymous_colors();
        let canon = canonical_form(&self.graph, &anon, &exact, DEFAULT_CANON_LEAVES, |order| {
            let mut names: BTreeMap<String, String> = BTreeMap::new();
            let mut parts = Vec::with_capacity(order.len());
            for l in order {
                parts.push(rename_fresh_tokens(&exact[l], &mut |base, tok| first_appearance(&mut names, base, tok)));
            }
            parts.join("\u{1}")
        })?;
        Ok((canon, exact))
    }

    /// Canonical representative: locations `0..n` in canonical order and
    /// restricted symbols renamed by first appearance.
    pub fn canonical(&self, env: &DefEnv) -> Result<CanonState> {
        let (canon, exact) = self.canonical_labelling()?;
        let mut names: BTreeMap<String, String> = BTreeMap::new();
        for l in &canon.order {
            rename_fresh_tokens(&exact[l], &mut |base, tok| first_appearance(&mut names, base, tok));
        }
        let relabel = canon.index_of();
        let graph = self.graph.relabel(&relabel);
        let comp = self
            .comp
            .iter()
            .map(|(l, t)| Ok((relabel[l], rename_symbols(t, &names, env)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let restricted: BTreeSet<String> = self
            .restricted
            .iter()
            .map(|f| names.get(f).cloned().unwrap_or_else(|| f.clone()))
            .collect();
        let n = canon.order.len() as Loc;
        let mut state = NetState {
            graph,
            comp,
            restricted,
            next_loc: n,
            next_name: 1,
        };
        state.next_name = state.max_fresh_counter() + 1;
        Ok(CanonState {
            key: canon.key,
            state,
            relabel,
        })
    }

    /// `P ⊕_D Q` on runtime states; `cross` pairs index into `self` and
    /// `other` respectively. `other` is relocated to fresh locations and its
    /// restricted symbols are renamed apart.
    pub fn compose(&self, other: &NetState, cross: &[(Loc, Loc)], env: &DefEnv) -> Result<(NetState, BTreeMap<Loc, Loc>)> {
        let mut out = self.clone();
        let mut ren = Renaming::new();
        for f in &other.restricted {
            let fresh = out.fresh_name(f);
            ren.insert(f.clone(), fresh.clone());
            out.restricted.insert(fresh);
        }
        let mut moved = BTreeMap::new();
        for (l, t) in &other.comp {
            let nl = out.fresh_loc();
            moved.insert(*l, nl);
            out.comp.insert(nl, rename_symbols(t, &ren, env)?);
        }
        out.graph = out.graph.oplus(&other.graph.relabel(&moved), &[])?;
        for (a, b) in cross {
            let nb = moved
                .get(b)
                .ok_or_else(|| Error::Graph(format!("cross edge names unknown location {b}")))?;
            if !self.graph.contains(*a) {
                return Err(Error::Graph(format!("cross edge names unknown location {a}")));
            }
            out.graph.add_edge(*a, *nb)?;
        }
        Ok((out, moved))
    }

    /// `P | Q`.
    pub fn par(&self, other: &NetState, env: &DefEnv) -> Result<NetState> {
        let cross: Vec<(Loc, Loc)> = self
            .locations()
            .flat_map(|a| other.locations().map(move |b| (a, b)))
            .collect();
        Ok(self.compose(other, &cross, env)?.0)
    }

    /// `P ⊕ Q`.
    pub fn oplus(&self, other: &NetState, env: &DefEnv) -> Result<NetState> {
        Ok(self.compose(other, &[], env)?.0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "graph": {
                "vertices": self.graph.vertices().collect::<Vec<_>>(),
                "edges": self.graph.edges().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
            },
            "components": self.comp.iter().map(|(l, t)| (l.to_string(), serde_json::Value::String(t.to_string()))).collect::<serde_json::Map<_, _>>(),
            "restricted": self.restricted.iter().collect::<Vec<_>>(),
        })
    }

    pub fn from_json(value: &serde_json::Value, env: &DefEnv) -> Result<NetState> {
        let bad = |m: &str| Error::Json(m.to_string());
        let g = value.get("graph").ok_or_else(|| bad("missing `graph`"))?;
        let vertices: Vec<Loc> = serde_json::from_value(g.get("vertices").cloned().unwrap_or_default())
            .map_err(|e| Error::Json(e.to_string()))?;
        let edges: Vec<(Loc, Loc)> = serde_json::from_value(g.get("edges").cloned().unwrap_or_default())
            .map_err(|e| Error::Json(e.to_string()))?;
        let graph = LocGraph::from_edges(vertices, edges)?;
        let comps = value
            .get("components")
            .and_then(|c| c.as_object())
            .ok_or_else(|| bad("missing `components`"))?;
        let mut comp = BTreeMap::new();
        for (k, v) in comps {
            let loc: Loc = k.parse().map_err(|_| bad("component keys are locations"))?;
            let text = v.as_str().ok_or_else(|| bad("components are process texts"))?;
            comp.insert(loc, parse_process(text, env)?);
        }
        let restricted: BTreeSet<String> =
            serde_json::from_value(value.get("restricted").cloned().unwrap_or(json!([])))
                .map_err(|e| Error::Json(e.to_string()))?;
        NetState::from_parts(graph, comp, restricted, env)
    }
}

impl fmt::Display for NetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (l, t) in &self.comp {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{l}: {t}")?;
        }
        let edges: Vec<String> = self.graph.edges().map(|(a, b)| format!("{a}-{b}")).collect();
        write!(f, " | edges {{{}}}", edges.join(", "))?;
        if !self.restricted.is_empty() {
            let r: Vec<&str> = self.restricted.iter().map(String::as_str).collect();
            write!(f, " \\ {{{}}}", r.join(", "))?;
        }
        Ok(())
    }
}

fn first_appearance(names: &mut BTreeMap<String, String>, base: &str, tok: &str) -> String {
    let n = names.len() + 1;
    names
        .entry(tok.to_string())
        .or_insert_with(|| format!("{base}{FRESH_MARK}{n}"))
        .clone()
}

/// Rewrites every alpha-converted symbol (`base~n`) in `text` through `f`,
/// which receives the base name and the full token.
fn rename_fresh_tokens(text: &str, f: &mut dyn FnMut(&str, &str) -> String) -> String {
    let mut out = String::with_capacity(text.len());
    let mut token = String::new();
    let flush = |token: &mut String, out: &mut String, f: &mut dyn FnMut(&str, &str) -> String| {
        if token.contains(FRESH_MARK) {
            out.push_str(&f(base_name(token), token));
        } else {
            out.push_str(token);
        }
        token.clear();
    };
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' || c == FRESH_MARK {
            token.push(c);
        } else {
            flush(&mut token, &mut out, f);
            out.push(c);
        }
    }
    flush(&mut token, &mut out, f);
    out
}

/// Whether `b` has a system of distinct representatives in the family.
pub fn barb_satisfiable(family: &[BTreeSet<Symbol>], b: &BTreeSet<Symbol>) -> bool {
    let wanted: Vec<&Symbol> = b.iter().collect();
    let mut owner: Vec<Option<usize>> = vec![None; family.len()];
    fn augment(
        i: usize,
        wanted: &[&Symbol],
        family: &[BTreeSet<Symbol>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for (loc, barbs) in family.iter().enumerate() {
            if seen[loc] || !barbs.contains(wanted[i]) {
                continue;
            }
            seen[loc] = true;
            if owner[loc].is_none_or(|j| augment(j, wanted, family, owner, seen)) {
                owner[loc] = Some(i);
                return true;
            }
        }
        false
    }
    (0..wanted.len()).all(|i| {
        let mut seen = vec![false; family.len()];
        augment(i, &wanted, family, &mut owner, &mut seen)
    })
}

/// Flattens a data-closed canonical process into a runtime state.
pub fn flatten(term: &ProcTerm, env: &DefEnv) -> Result<NetState> {
    if let Classification::NotCanonical { path, reason } = check_canonical(term, env)? {
        return Err(Error::NotCanonical { path, reason });
    }
    let pv = term.proc_vars();
    if !pv.is_empty() {
        return Err(Error::ProcessVariable(pv.into_iter().collect::<Vec<_>>().join(", ")));
    }
    let fv = term.free_vars();
    if !fv.is_empty() {
        return Err(Error::OpenTerm(fv.into_iter().collect::<Vec<_>>().join(", ")));
    }
    let mut st = NetState::empty();
    st.graph = st.build(term, &Renaming::new(), env)?;
    st.gc_restricted();
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn sym(name: &str, arity: usize, polarity: Polarity) -> Symbol {
        Symbol::new(name, arity, polarity)
    }

    #[test]
    fn heads_resolve_conditionals_and_constants() {
        let prog = parse_program(
            "def A(x) = 'f(x + 1).(*);\n process C = if true then g(x).(0) + 'h(1).(*) else 0;",
        )
        .unwrap();
        let h = cs_head(&ProcTerm::constant("A", vec![crate::expr::Expr::int(5)]), &prog.env).unwrap();
        assert_eq!(
            h.summands,
            vec![Head::Output {
                symbol: "f".into(),
                value: Value::Int(6),
                children: vec![ProcTerm::Idle]
            }]
        );
        let c = cs_head(&prog.process("C").unwrap(), &prog.env).unwrap();
        assert_eq!(c.summands.len(), 2);
        assert_eq!(cs_head(&ProcTerm::Nil, &prog.env).unwrap().summands, vec![Head::Nil]);
    }

    #[test]
    fn unguarded_unfolding_is_reported() {
        let mut env = DefEnv::new();
        env.define("L", &[], ProcTerm::constant("L", vec![])).unwrap();
        assert!(matches!(
            cs_head(&ProcTerm::constant("L", vec![]), &env),
            Err(Error::GuardViolation(_))
        ));
    }

    #[test]
    fn flatten_examples() {
        let prog = parse_program(
            "process PQ = 'f(1).(*) | f(x).(*);\n\
             process Two = (f(x).(*) \\ {f}) <+> ('f(1).(*) \\ {f});\n\
             def A1 = 'f(5).(A1); def A2 = f(x).(A2); def A3 = f(x).(A3);\n\
             process S = (A1 | A2) <+> A3;",
        )
        .unwrap();
        let pq = flatten(&prog.process("PQ").unwrap(), &prog.env).unwrap();
        assert_eq!((pq.len(), pq.graph.edge_count()), (2, 1));
        assert!(pq.restricted.is_empty());
        let two = flatten(&prog.process("Two").unwrap(), &prog.env).unwrap();
        assert_eq!((two.len(), two.graph.edge_count()), (2, 0));
        assert_eq!(two.restricted.len(), 2);
        let names: BTreeSet<String> = two.comp.values().flat_map(|t| t.written_symbols()).collect();
        assert_eq!(names, two.restricted);
        let s = flatten(&prog.process("S").unwrap(), &prog.env).unwrap();
        assert_eq!(s.graph.edges().collect::<Vec<_>>(), vec![(1, 2)]);
        assert_eq!(s.comp[&3], ProcTerm::constant("A3", vec![]));
    }

    #[test]
    fn barbs_of_example_one() {
        let prog = parse_program("process P = 'f(3).(*, *) | 'g(4).(*, *);").unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        let fb = sym("f", 2, Polarity::Co);
        let gb = sym("g", 2, Polarity::Co);
        let sig: Vec<_> = p.barb_signature(&prog.env).unwrap().into_iter().map(|(_, s)| s).collect();
        assert_eq!(sig, vec![BTreeSet::from([fb.clone()]), BTreeSet::from([gb.clone()])]);
        assert!(p.has_barb(&BTreeSet::new(), &prog.env).unwrap());
        assert!(p.has_barb(&BTreeSet::from([fb.clone(), gb.clone()]), &prog.env).unwrap());
        assert!(!p.has_barb(&BTreeSet::from([sym("f", 2, Polarity::Plain)]), &prog.env).unwrap());
    }

    #[test]
    fn one_location_cannot_show_two_barbs() {
        let prog = parse_program("process P = f(x).(*) + 'g(1).(*);").unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        let both = BTreeSet::from([sym("f", 1, Polarity::Plain), sym("g", 1, Polarity::Co)]);
        assert_eq!(barbs_of_component(&prog.process("P").unwrap(), &prog.env).unwrap(), both);
        assert!(!p.has_barb(&both, &prog.env).unwrap());
    }

    #[test]
    fn restriction_hides_barbs() {
        let prog = parse_program("process P = ('f(3).(*, *) | 'g(4).(*, *)) \\ {f};").unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        assert!(!p.has_barb(&BTreeSet::from([sym("f", 2, Polarity::Co)]), &prog.env).unwrap());
        assert!(p.has_barb(&BTreeSet::from([sym("g", 2, Polarity::Co)]), &prog.env).unwrap());
    }

    #[test]
    fn canonical_keys_ignore_location_and_restricted_names() {
        let prog = parse_program(
            "process A = ('f(1).(*) \\ {f}) <+> (h(x).(*) \\ {h});\n process B = (h(x).(*) \\ {h}) <+> ('f(1).(*) \\ {f});",
        )
        .unwrap();
        let a = flatten(&prog.process("A").unwrap(), &prog.env).unwrap();
        let b = flatten(&prog.process("B").unwrap(), &prog.env).unwrap();
        assert_ne!(a.restricted, b.restricted);
        assert_eq!(a.canonical_key().unwrap(), b.canonical_key().unwrap());
        let ca = a.canonical(&prog.env).unwrap();
        assert_eq!(ca.state.canonical_key().unwrap(), ca.key);
    }

    #[test]
    fn json_round_trip() {
        let prog = parse_program(
            "def A(x) = f(y).(A(x)); process P = (A(1) | 'f(2).(*)) \\ {f} <+> 'g((Ack, [1, 2])).(0);",
        )
        .unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        let back = NetState::from_json(&p.to_json(), &prog.env).unwrap();
        assert_eq!(back.canonical_key().unwrap(), p.canonical_key().unwrap());
    }

    #[test]
    fn firing_inherits_neighbours() {
        let prog = parse_program("process P = f(x).(*, *) | 'f(1).(*, *) | *;").unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        let parts = vec![(1, vec![ProcTerm::Idle, ProcTerm::Idle]), (2, vec![ProcTerm::Idle, ProcTerm::Idle])];
        let fired = p.fire(&parts, &prog.env).unwrap();
        let t = &fired.target;
        assert_eq!(t.len(), 5);
        let ins: Vec<Loc> = fired.families[0].iter().flatten().copied().collect();
        let outs: Vec<Loc> = fired.families[1].iter().flatten().copied().collect();
        for &a in &ins {
            assert!(t.graph.adjacent(a, 3));
            for &b in &outs {
                assert!(t.graph.adjacent(a, b));
            }
        }
        assert!(!t.graph.adjacent(ins[0], ins[1]));
        assert_eq!(fired.residual[&ins[0]], 1);
        assert_eq!(fired.residual[&3], 3);
    }
}
