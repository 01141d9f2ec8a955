//! The localized labelled transition system: single-labelled transitions,
//! multi-labelled transitions built from pairwise unrelated labels, and
//! weak transitions over a finite value universe.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::Result;
use crate::expr::Value;
use crate::graph::{compose, Loc, ResidualMap};
use crate::reduction::{internal_steps, Status};
use crate::state::{Head, NetState};
use crate::syntax::{DefEnv, Polarity, ProcTerm};

/// `fv` or `f̄v`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Action {
    pub symbol: String,
    pub polarity: Polarity,
    pub value: Value,
}

impl Action {
    pub fn input(symbol: &str, value: Value) -> Action {
        Action {
            symbol: symbol.to_string(),
            polarity: Polarity::Plain,
            value,
        }
    }

    pub fn output(symbol: &str, value: Value) -> Action {
        Action {
            symbol: symbol.to_string(),
            polarity: Polarity::Co,
            value,
        }
    }

    /// `symb(α)`: the symbol together with its polarity.
    pub fn symb(&self) -> (&str, Polarity) {
        (&self.symbol, self.polarity)
    }

    pub fn dual(&self) -> Action {
        Action {
            polarity: self.polarity.dual(),
            ..self.clone()
        }
    }

    pub fn is_dual_of(&self, other: &Action) -> bool {
        self.symbol == other.symbol && self.value == other.value && self.polarity != other.polarity
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.polarity {
            Polarity::Plain => write!(f, "{}<{}>", self.symbol, self.value),
            Polarity::Co => write!(f, "'{}<{}>", self.symbol, self.value),
        }
    }
}

/// `p:α·(L⃗)` or `τ`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TransLabel {
    Tau,
    Visible {
        loc: Loc,
        action: Action,
        families: Vec<BTreeSet<Loc>>,
    },
}

impl TransLabel {
    pub fn action(&self) -> Option<&Action> {
        match self {
            TransLabel::Tau => None,
            TransLabel::Visible { action, .. } => Some(action),
        }
    }

    pub fn loc(&self) -> Option<Loc> {
        match self {
            TransLabel::Tau => None,
            TransLabel::Visible { loc, .. } => Some(*loc),
        }
    }
}

impl fmt::Display for TransLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransLabel::Tau => f.write_str("tau"),
            TransLabel::Visible {
                loc,
                action,
                families,
            } => {
                write!(f, "{loc}:{action}(")?;
                for (i, l) in families.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    let v: Vec<String> = l.iter().map(|x| x.to_string()).collect();
                    write!(f, "{{{}}}", v.join(","))?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A finite multiset of labels, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LabelMultiset {
    labels: Vec<TransLabel>,
}

impl LabelMultiset {
    pub fn new(mut labels: Vec<TransLabel>) -> LabelMultiset {
        labels.sort();
        LabelMultiset { labels }
    }

    pub fn taus(n: usize) -> LabelMultiset {
        LabelMultiset {
            labels: vec![TransLabel::Tau; n],
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn count(&self, d: &TransLabel) -> usize {
        self.labels.iter().filter(|l| *l == d).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransLabel> {
        self.labels.iter()
    }

    pub fn union(&self, other: &LabelMultiset) -> LabelMultiset {
        LabelMultiset::new(self.labels.iter().chain(&other.labels).cloned().collect())
    }

    /// Multiplicities subtract and clamp at zero.
    pub fn difference(&self, other: &LabelMultiset) -> LabelMultiset {
        let mut remove: BTreeMap<&TransLabel, usize> = BTreeMap::new();
        for l in &other.labels {
            *remove.entry(l).or_default() += 1;
        }
        let mut out = Vec::new();
        for l in &self.labels {
            match remove.get_mut(l) {
                Some(n) if *n > 0 => *n -= 1,
                _ => out.push(l.clone()),
            }
        }
        LabelMultiset { labels: out }
    }

    pub fn tau_count(&self) -> usize {
        self.count(&TransLabel::Tau)
    }

    /// `Δ̂`: the visible labels.
    pub fn visible(&self) -> LabelMultiset {
        LabelMultiset {
            labels: self.labels.iter().filter(|l| **l != TransLabel::Tau).cloned().collect(),
        }
    }

    pub fn is_visible_only(&self) -> bool {
        self.tau_count() == 0
    }

    /// The actions of the visible labels, sorted.
    pub fn actions(&self) -> Vec<Action> {
        let mut a: Vec<Action> = self.labels.iter().filter_map(|l| l.action().cloned()).collect();
        a.sort();
        a
    }

    pub fn is_pairwise_unrelated(&self) -> bool {
        punrel(&self.labels)
    }
}

impl fmt::Display for LabelMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Visible labels at distinct locations must carry distinct `symb`; `τ`
/// is unrelated to everything.
pub fn punrel(labels: &[TransLabel]) -> bool {
    let vis: Vec<(Loc, &Action)> = labels
        .iter()
        .filter_map(|l| match l {
            TransLabel::Visible { loc, action, .. } => Some((*loc, action)),
            TransLabel::Tau => None,
        })
        .collect();
    for (i, (p, a)) in vis.iter().enumerate() {
        for (q, b) in &vis[i + 1..] {
            if p != q && a.symb() == b.symb() {
                return false;
            }
        }
    }
    true
}

/// One location firing one summand.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Firing {
    pub loc: Loc,
    pub summand: usize,
    pub action: Action,
}

#[derive(Debug, Clone)]
pub struct LabeledStep {
    pub target: NetState,
    pub labels: LabelMultiset,
    pub residual: ResidualMap,
    /// Participants, sorted by location.
    pub firings: Vec<Firing>,
    /// Communicating pairs as (input location, output location).
    pub matched: Vec<(Loc, Loc)>,
    /// Child location sets of every participant in the target.
    pub families: BTreeMap<Loc, Vec<BTreeSet<Loc>>>,
}

impl LabeledStep {
    /// Same participants, summands, actions and communications.
    pub fn same_plan(&self, other: &LabeledStep) -> bool {
        self.firings == other.firings && self.matched == other.matched
    }

    /// The `τ` and single-label units the step is made of.
    pub fn units(&self) -> Vec<Vec<Firing>> {
        let by_loc: BTreeMap<Loc, &Firing> = self.firings.iter().map(|f| (f.loc, f)).collect();
        let mut in_pair = BTreeSet::new();
        let mut units = Vec::new();
        for (p, q) in &self.matched {
            in_pair.insert(*p);
            in_pair.insert(*q);
            units.push(vec![by_loc[p].clone(), by_loc[q].clone()]);
        }
        for f in &self.firings {
            if !in_pair.contains(&f.loc) {
                units.push(vec![f.clone()]);
            }
        }
        units
    }
}

/// Per-run transition configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LtsConfig {
    /// Values an early input may receive from the environment.
    pub universe: Vec<Value>,
    /// Largest multiset size; `None` means the number of components.
    pub max_width: Option<usize>,
}

impl Default for LtsConfig {
    fn default() -> Self {
        LtsConfig {
            universe: vec![Value::Int(0), Value::Int(1)],
            max_width: None,
        }
    }
}

impl LtsConfig {
    pub fn width_for(&self, state: &NetState) -> usize {
        self.max_width.unwrap_or(state.len()).max(1)
    }
}

/// A prefix a location may fire, with its instantiated children.
struct Option_ {
    summand: usize,
    action: Action,
    children: Vec<ProcTerm>,
}

fn options_at(state: &NetState, env: &DefEnv, loc: Loc, values: &[Value]) -> Result<Vec<Option_>> {
    let heads = state.heads(loc, env)?;
    let mut out = Vec::new();
    for (i, h) in heads.summands.iter().enumerate() {
        match h {
            Head::Input { symbol, .. } => {
                for v in values {
                    out.push(Option_ {
                        summand: i,
                        action: Action::input(symbol, v.clone()),
                        children: h.children_with(v),
                    });
                }
            }
            Head::Output {
                symbol,
                value,
                children,
            } => out.push(Option_ {
                summand: i,
                action: Action::output(symbol, value.clone()),
                children: children.clone(),
            }),
            Head::Nil | Head::Idle => {}
        }
    }
    Ok(out)
}

/// Fires the given plan and assembles the labelled step.
fn realize(
    state: &NetState,
    env: &DefEnv,
    plan: Vec<(Firing, Vec<ProcTerm>)>,
    matched: Vec<(Loc, Loc)>,
) -> Result<LabeledStep> {
    let parts: Vec<(Loc, Vec<ProcTerm>)> = plan.iter().map(|(f, c)| (f.loc, c.clone())).collect();
    let fired = state.fire(&parts, env)?;
    let paired: BTreeSet<Loc> = matched.iter().flat_map(|&(p, q)| [p, q]).collect();
    let mut labels = vec![TransLabel::Tau; matched.len()];
    let mut families = BTreeMap::new();
    for ((f, _), fam) in plan.iter().zip(fired.families) {
        if !paired.contains(&f.loc) {
            labels.push(TransLabel::Visible {
                loc: f.loc,
                action: f.action.clone(),
                families: fam.clone(),
            });
        }
        families.insert(f.loc, fam);
    }
    let mut firings: Vec<Firing> = plan.into_iter().map(|(f, _)| f).collect();
    firings.sort();
    let mut matched = matched;
    matched.sort();
    Ok(LabeledStep {
        target: fired.target,
        labels: LabelMultiset::new(labels),
        residual: fired.residual,
        firings,
        matched,
        families,
    })
}

/// Input, Output and Com1 steps. Visible labels on restricted symbols are
/// dropped; a communication receives the sender's value whether or not it
/// lies in the universe.
pub fn single_transitions(state: &NetState, env: &DefEnv, cfg: &LtsConfig) -> Result<Vec<LabeledStep>> {
    let mut steps = Vec::new();
    for loc in state.locations() {
        for o in options_at(state, env, loc, &cfg.universe)? {
            if state.is_restricted(&o.action.symbol) {
                continue;
            }
            let firing = Firing {
                loc,
                summand: o.summand,
                action: o.action,
            };
            steps.push(realize(state, env, vec![(firing, o.children)], Vec::new())?);
        }
    }
    for step in internal_steps(state, env)? {
        let r = step.fired;
        let heads_p = state.heads(r.p, env)?;
        let input = &heads_p.summands[r.input_summand];
        let plan = vec![
            (
                Firing {
                    loc: r.p,
                    summand: r.input_summand,
                    action: Action::input(&r.symbol, r.value.clone()),
                },
                input.children_with(&r.value),
            ),
            (
                Firing {
                    loc: r.q,
                    summand: r.output_summand,
                    action: Action::output(&r.symbol, r.value.clone()),
                },
                state.heads(r.q, env)?.summands[r.output_summand].children_with(&r.value),
            ),
        ];
        steps.push(realize(state, env, plan, vec![(r.p, r.q)])?);
    }
    Ok(steps)
}

/// Multi-labelled transitions up to a width, with a truncation status.
#[derive(Debug, Clone)]
pub struct MultiSteps {
    pub steps: Vec<LabeledStep>,
    pub status: Status,
}

/// All multi-labelled transitions of size at most the configured width.
///
/// A choice of participants is valid when some binary decomposition of it
/// keeps every intermediate multiset pairwise unrelated; at each split the
/// dual labels on adjacent locations across the split communicate.
pub fn multi_transitions(state: &NetState, env: &DefEnv, cfg: &LtsConfig) -> Result<MultiSteps> {
    let width = cfg.width_for(state);
    let locs: Vec<Loc> = state.locations().collect();
    let mut values: BTreeSet<Value> = cfg.universe.iter().cloned().collect();
    for &l in &locs {
        for h in &state.heads(l, env)?.summands {
            if let Head::Output { value, .. } = h {
                values.insert(value.clone());
            }
        }
    }
    let values: Vec<Value> = values.into_iter().collect();
    let universe: BTreeSet<&Value> = cfg.universe.iter().collect();
    let opts: Vec<Vec<Option_>> = locs
        .iter()
        .map(|&l| options_at(state, env, l, &values))
        .collect::<Result<_>>()?;
    let active: Vec<usize> = (0..locs.len()).filter(|&i| !opts[i].is_empty()).collect();
    let cap = (2 * width).min(active.len());
    let mut status = if cap < active.len() {
        Status::Truncated
    } else {
        Status::Complete
    };

    let mut steps = Vec::new();
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    let mut seen: BTreeSet<(Vec<Firing>, Vec<(Loc, Loc)>)> = BTreeSet::new();
    let mut emit = |chosen: &[(usize, usize)], status: &mut Status| -> Result<()> {
        let firings: Vec<Firing> = chosen
            .iter()
            .map(|&(i, o)| Firing {
                loc: locs[i],
                summand: opts[i][o].summand,
                action: opts[i][o].action.clone(),
            })
            .collect();
        let adjacent = |a: usize, b: usize| state.graph.adjacent(firings[a].loc, firings[b].loc);
        for matching in valid_matchings(&firings, &adjacent) {
            let paired: BTreeSet<usize> = matching.iter().flat_map(|&(a, b)| [a, b]).collect();
            let size = matching.len() + firings.len() - paired.len();
            let visible_ok = (0..firings.len()).filter(|i| !paired.contains(i)).all(|i| {
                let a = &firings[i].action;
                !state.is_restricted(&a.symbol) && (a.polarity == Polarity::Co || universe.contains(&a.value))
            });
            if !visible_ok {
                continue;
            }
            if size > width {
                *status = Status::Truncated;
                continue;
            }
            let matched: Vec<(Loc, Loc)> = matching
                .iter()
                .map(|&(a, b)| {
                    if firings[a].action.polarity == Polarity::Plain {
                        (firings[a].loc, firings[b].loc)
                    } else {
                        (firings[b].loc, firings[a].loc)
                    }
                })
                .collect();
            let mut key_m = matched.clone();
            key_m.sort();
            if !seen.insert((firings.clone(), key_m)) {
                continue;
            }
            let plan = chosen
                .iter()
                .zip(&firings)
                .map(|(&(i, o), f)| (f.clone(), opts[i][o].children.clone()))
                .collect();
            steps.push(realize(state, env, plan, matched)?);
        }
        Ok(())
    };
    fn rec(
        k: usize,
        active: &[usize],
        opts: &[Vec<Option_>],
        cap: usize,
        chosen: &mut Vec<(usize, usize)>,
        status: &mut Status,
        emit: &mut dyn FnMut(&[(usize, usize)], &mut Status) -> Result<()>,
    ) -> Result<()> {
        if k == active.len() {
            if !chosen.is_empty() {
                emit(chosen, status)?;
            }
            return Ok(());
        }
        rec(k + 1, active, opts, cap, chosen, status, emit)?;
        if chosen.len() < cap {
            let i = active[k];
            for o in 0..opts[i].len() {
                chosen.push((i, o));
                rec(k + 1, active, opts, cap, chosen, status, emit)?;
                chosen.pop();
            }
        }
        Ok(())
    }
    rec(0, &active, &opts, cap, &mut chosen, &mut status, &mut emit)?;
    Ok(MultiSteps { steps, status })
}

/// The sets of communicating pairs reachable by some decomposition tree.
fn valid_matchings(firings: &[Firing], adjacent: &dyn Fn(usize, usize) -> bool) -> BTreeSet<Vec<(usize, usize)>> {
    let n = firings.len();
    let full: u32 = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut memo: HashMap<u32, BTreeSet<Vec<(usize, usize)>>> = HashMap::new();
    outcomes(full, firings, adjacent, &mut memo)
}

fn outcomes(
    set: u32,
    firings: &[Firing],
    adjacent: &dyn Fn(usize, usize) -> bool,
    memo: &mut HashMap<u32, BTreeSet<Vec<(usize, usize)>>>,
) -> BTreeSet<Vec<(usize, usize)>> {
    if let Some(r) = memo.get(&set) {
        return r.clone();
    }
    let mut out = BTreeSet::new();
    if set.count_ones() == 1 {
        out.insert(Vec::new());
    } else {
        let low = set & set.wrapping_neg();
        let rest = set & !low;
        // Submasks of `rest`; the left part always holds the lowest member.
        let mut sub = rest;
        loop {
            let left = low | sub;
            if left != set {
                let right = set & !left;
                let lo = outcomes(left, firings, adjacent, memo);
                let ro = outcomes(right, firings, adjacent, memo);
                for a in &lo {
                    for b in &ro {
                        if let Some(m) = join(left, right, a, b, firings, adjacent) {
                            out.insert(m);
                        }
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    memo.insert(set, out.clone());
    out
}

fn join(
    left: u32,
    right: u32,
    a: &[(usize, usize)],
    b: &[(usize, usize)],
    firings: &[Firing],
    adjacent: &dyn Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    let used: BTreeSet<usize> = a.iter().chain(b).flat_map(|&(x, y)| [x, y]).collect();
    let members = |m: u32| (0..firings.len()).filter(move |i| m & (1 << i) != 0);
    let rl: Vec<usize> = members(left).filter(|i| !used.contains(i)).collect();
    let rr: Vec<usize> = members(right).filter(|i| !used.contains(i)).collect();
    let all: Vec<usize> = rl.iter().chain(&rr).copied().collect();
    for (k, &x) in all.iter().enumerate() {
        for &y in &all[k + 1..] {
            if firings[x].action.symb() == firings[y].action.symb() {
                return None;
            }
        }
    }
    let mut m: Vec<(usize, usize)> = a.iter().chain(b).copied().collect();
    for &x in &rl {
        for &y in &rr {
            if adjacent(x, y) && firings[x].action.is_dual_of(&firings[y].action) {
                m.push((x.min(y), x.max(y)));
            }
        }
    }
    m.sort();
    Some(m)
}

/// A state reached through a chain of transitions, with the composed
/// residual back to the origin.
#[derive(Debug, Clone)]
pub struct Reached {
    pub key: String,
    pub state: Arc<NetState>,
    pub residual: ResidualMap,
}

/// One result of `P ⇒^Δ̂ P′`.
#[derive(Debug, Clone)]
pub struct WeakMove {
    pub key: String,
    pub target: Arc<NetState>,
    /// Each matched action with the origin location `ρ(q)` that performed it.
    pub label_locs: Vec<(Action, Loc)>,
    /// `ρ∘ρ₁∘ρ′`: target locations → origin locations.
    pub residual: ResidualMap,
}

/// A transition between canonical representatives.
#[derive(Debug, Clone)]
pub struct CanonStep {
    pub key: String,
    pub target: Arc<NetState>,
    pub labels: LabelMultiset,
    /// Canonical target locations → source locations.
    pub residual: ResidualMap,
}

type Cache<K, V> = Mutex<HashMap<K, Arc<V>>>;

/// Memoising driver over canonical states, shared by the equivalence
/// checkers.
pub struct Lts<'a> {
    pub env: &'a DefEnv,
    pub cfg: LtsConfig,
    /// Cap on the `τ*` closure size per state.
    pub max_closure: usize,
    steps: Cache<String, (Vec<CanonStep>, Status)>,
    closures: Cache<String, (Vec<Reached>, Status)>,
    weak: Cache<(String, Vec<Action>), Vec<WeakMove>>,
    truncated: Mutex<bool>,
}

impl<'a> Lts<'a> {
    pub fn new(env: &'a DefEnv, cfg: LtsConfig, max_closure: usize) -> Lts<'a> {
        Lts {
            env,
            cfg,
            max_closure,
            steps: Mutex::new(HashMap::new()),
            closures: Mutex::new(HashMap::new()),
            weak: Mutex::new(HashMap::new()),
            truncated: Mutex::new(false),
        }
    }

    /// Whether any exploration so far hit a budget.
    pub fn truncated(&self) -> bool {
        *self.truncated.lock().unwrap()
    }

    fn note(&self, status: Status) {
        if status == Status::Truncated {
            *self.truncated.lock().unwrap() = true;
        }
    }

    /// Canonical representative of a state.
    pub fn canon(&self, state: &NetState) -> Result<(String, Arc<NetState>)> {
        let c = state.canonical(self.env)?;
        Ok((c.key, Arc::new(c.state)))
    }

    /// Multi-labelled steps of a canonical state, targets canonicalised.
    pub fn steps(&self, key: &str, state: &NetState) -> Result<Arc<(Vec<CanonStep>, Status)>> {
        if let Some(s) = self.steps.lock().unwrap().get(key) {
            return Ok(s.clone());
        }
        let multi = multi_transitions(state, self.env, &self.cfg)?;
        self.note(multi.status);
        let mut out = Vec::with_capacity(multi.steps.len());
        for s in multi.steps {
            let c = s.target.canonical(self.env)?;
            let back: BTreeMap<Loc, Loc> = c.relabel.iter().map(|(&o, &n)| (n, o)).collect();
            let residual = back.iter().map(|(&n, o)| (n, s.residual[o])).collect();
            out.push(CanonStep {
                key: c.key,
                target: Arc::new(c.state),
                labels: s.labels,
                residual,
            });
        }
        let r = Arc::new((out, multi.status));
        self.steps.lock().unwrap().insert(key.to_string(), r.clone());
        Ok(r)
    }

    /// `τ*` closure of a canonical state, one entry per distinct
    /// (state, residual) pair.
    pub fn tau_closure(&self, key: &str, state: &Arc<NetState>) -> Result<Arc<(Vec<Reached>, Status)>> {
        if let Some(s) = self.closures.lock().unwrap().get(key) {
            return Ok(s.clone());
        }
        let start = Reached {
            key: key.to_string(),
            state: state.clone(),
            residual: state.locations().map(|l| (l, l)).collect(),
        };
        let mut seen: BTreeSet<(String, ResidualMap)> = BTreeSet::new();
        seen.insert((start.key.clone(), start.residual.clone()));
        let mut out = vec![start.clone()];
        let mut queue = VecDeque::from([start]);
        let mut status = Status::Complete;
        while let Some(r) = queue.pop_front() {
            let steps = self.steps(&r.key, &r.state)?;
            for s in steps.0.iter().filter(|s| s.labels.size() == 1 && s.labels.tau_count() == 1) {
                let residual = compose(&r.residual, &s.residual)?;
                if seen.insert((s.key.clone(), residual.clone())) {
                    if out.len() >= self.max_closure {
                        status = Status::Truncated;
                        continue;
                    }
                    let next = Reached {
                        key: s.key.clone(),
                        state: s.target.clone(),
                        residual,
                    };
                    out.push(next.clone());
                    queue.push_back(next);
                }
            }
        }
        self.note(status);
        let r = Arc::new((out, status));
        self.closures.lock().unwrap().insert(key.to_string(), r.clone());
        Ok(r)
    }

    /// `P ⇒^Δ̂ P′` for a multiset of actions (sorted); empty `shape` gives
    /// the `τ*` closure.
    pub fn weak_moves(&self, key: &str, state: &Arc<NetState>, shape: &[Action]) -> Result<Arc<Vec<WeakMove>>> {
        let ck = (key.to_string(), shape.to_vec());
        if let Some(w) = self.weak.lock().unwrap().get(&ck) {
            return Ok(w.clone());
        }
        let out = Arc::new(self.compute_weak_moves(key, state, shape)?);
        self.weak.lock().unwrap().insert(ck, out.clone());
        Ok(out)
    }

    /// Number of distinct canonical states whose steps have been computed.
    pub fn explored(&self) -> usize {
        self.steps.lock().unwrap().len()
    }

    fn compute_weak_moves(&self, key: &str, state: &Arc<NetState>, shape: &[Action]) -> Result<Vec<WeakMove>> {
        let closure = self.tau_closure(key, state)?;
        let mut seen: BTreeSet<(String, Vec<(Action, Loc)>, ResidualMap)> = BTreeSet::new();
        let mut out = Vec::new();
        if shape.is_empty() {
            for r in &closure.0 {
                out.push(WeakMove {
                    key: r.key.clone(),
                    target: r.state.clone(),
                    label_locs: Vec::new(),
                    residual: r.residual.clone(),
                });
            }
            return Ok(out);
        }
        for r in &closure.0 {
            let steps = self.steps(&r.key, &r.state)?;
            for s in &steps.0 {
                if !s.labels.is_visible_only() || s.labels.actions() != shape {
                    continue;
                }
                let mut label_locs: Vec<(Action, Loc)> = s
                    .labels
                    .iter()
                    .filter_map(|l| match l {
                        TransLabel::Visible { loc, action, .. } => Some((action.clone(), r.residual[loc])),
                        TransLabel::Tau => None,
                    })
                    .collect();
                label_locs.sort();
                let mid = compose(&r.residual, &s.residual)?;
                let after = self.tau_closure(&s.key, &s.target)?;
                for t in &after.0 {
                    let residual = compose(&mid, &t.residual)?;
                    if seen.insert((t.key.clone(), label_locs.clone(), residual.clone())) {
                        out.push(WeakMove {
                            key: t.key.clone(),
                            target: t.state.clone(),
                            label_locs: label_locs.clone(),
                            residual,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Result of checking one multi-step against its sequential realisations.
#[derive(Debug, Clone, Serialize)]
pub struct DiamondReport {
    pub checked: usize,
    pub counterexamples: Vec<String>,
}

impl DiamondReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Fires the units of a multi-step one after another, checking that each
/// is a single transition of the intermediate state, and compares the end
/// state and composed residual with the simultaneous step.
pub fn sequentialize(state: &NetState, env: &DefEnv, cfg: &LtsConfig, step: &LabeledStep, order: &[usize]) -> Result<Option<String>> {
    let units = step.units();
    let mut cur = state.clone();
    let mut residual: ResidualMap = state.locations().map(|l| (l, l)).collect();
    let mut families: BTreeMap<Loc, Vec<BTreeSet<Loc>>> = BTreeMap::new();
    for &u in order {
        let unit = &units[u];
        let singles = single_transitions(&cur, env, cfg)?;
        let matched: Vec<(Loc, Loc)> = if unit.len() == 2 {
            step.matched.iter().filter(|(p, q)| unit.iter().any(|f| f.loc == *p || f.loc == *q)).copied().collect()
        } else {
            Vec::new()
        };
        let mut firings = unit.clone();
        firings.sort();
        let Some(single) = singles.iter().find(|s| s.firings == firings && s.matched == matched) else {
            return Ok(Some(format!("unit {firings:?} is not a single transition of the intermediate state")));
        };
        residual = compose(&residual, &single.residual)?;
        families.extend(single.families.clone());
        cur = single.target.clone();
    }
    let norm = |fams: &BTreeMap<Loc, Vec<BTreeSet<Loc>>>, l: Loc| -> (u8, Loc, usize, usize) {
        for (p, fam) in fams {
            for (i, set) in fam.iter().enumerate() {
                if let Some(r) = set.iter().position(|&x| x == l) {
                    return (1, *p, i, r);
                }
            }
        }
        (0, l, 0, 0)
    };
    let edges = |s: &NetState, fams: &BTreeMap<Loc, Vec<BTreeSet<Loc>>>| -> BTreeSet<_> {
        s.graph
            .edges()
            .map(|(a, b)| {
                let (x, y) = (norm(fams, a), norm(fams, b));
                (x.min(y), x.max(y))
            })
            .collect()
    };
    if edges(&cur, &families) != edges(&step.target, &step.families) {
        return Ok(Some("sequential and simultaneous targets have different graphs".into()));
    }
    let res = |r: &ResidualMap, fams| -> BTreeMap<_, Loc> { r.iter().map(|(&x, &y)| (norm(fams, x), y)).collect() };
    if res(&residual, &families) != res(&step.residual, &step.families) {
        return Ok(Some("composed residuals differ from the simultaneous residual".into()));
    }
    if cur.canonical_key()? != step.target.canonical_key()? {
        return Ok(Some("sequential and simultaneous targets differ".into()));
    }
    Ok(None)
}

/// Checks every size-2 multi-step in both orders, and every larger
/// multi-step in one order.
pub fn diamond_check(state: &NetState, env: &DefEnv, cfg: &LtsConfig) -> Result<DiamondReport> {
    let multi = multi_transitions(state, env, cfg)?;
    let mut report = DiamondReport {
        checked: 0,
        counterexamples: Vec::new(),
    };
    for step in &multi.steps {
        let n = step.labels.size();
        if n < 2 {
            continue;
        }
        let orders: Vec<Vec<usize>> = if n == 2 {
            vec![vec![0, 1], vec![1, 0]]
        } else {
            vec![(0..n).collect()]
        };
        for order in orders {
            report.checked += 1;
            if let Some(why) = sequentialize(state, env, cfg, step, &order)? {
                report.counterexamples.push(format!("{} in order {order:?}: {why}", step.labels));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;
    use crate::state::flatten;

    fn load(src: &str, name: &str) -> (DefEnv, NetState) {
        let prog = parse_program(src).unwrap();
        let st = flatten(&prog.process(name).unwrap(), &prog.env).unwrap();
        (prog.env, st)
    }

    fn vis(loc: Loc, action: Action) -> TransLabel {
        TransLabel::Visible {
            loc,
            action,
            families: vec![],
        }
    }

    #[test]
    fn multiset_arithmetic() {
        let a = LabelMultiset::new(vec![TransLabel::Tau, TransLabel::Tau, vis(1, Action::input("f", Value::Int(1)))]);
        let b = LabelMultiset::taus(3);
        assert_eq!(a.union(&b).size(), 6);
        assert_eq!(a.difference(&b).size(), 1);
        assert_eq!(a.visible().size(), 1);
        assert_eq!(b.difference(&a).size(), 1);
    }

    #[test]
    fn unrelatedness() {
        assert!(punrel(&[TransLabel::Tau, TransLabel::Tau]));
        let f1 = Action::input("f1", Value::Int(1));
        let f2 = Action::input("f2", Value::Int(2));
        assert!(punrel(&[vis(1, f1.clone()), vis(2, f2)]));
        assert!(!punrel(&[vis(1, f1.clone()), vis(2, Action::input("f1", Value::Int(0)))]));
        assert!(punrel(&[vis(1, f1.clone()), vis(1, f1.clone())]));
        assert!(punrel(&[vis(1, f1.clone()), vis(2, f1.dual())]));
    }

    #[test]
    fn early_inputs_branch_over_the_universe() {
        let (env, s) = load("process P = f(x).(*);", "P");
        let steps = single_transitions(&s, &env, &LtsConfig::default()).unwrap();
        assert_eq!(steps.len(), 2);
        let actions: Vec<Vec<Action>> = steps.iter().map(|s| s.labels.actions()).collect();
        assert_eq!(actions, vec![vec![Action::input("f", Value::Int(0))], vec![Action::input("f", Value::Int(1))]]);
    }

    #[test]
    fn restriction_hides_visible_labels() {
        let (env, s) = load("process P = f(x).(*) \\ {f};", "P");
        assert!(single_transitions(&s, &env, &LtsConfig::default()).unwrap().is_empty());
        assert!(multi_transitions(&s, &env, &LtsConfig::default()).unwrap().steps.is_empty());
    }

    #[test]
    fn output_steps_respawn_constants() {
        let (env, s) = load("def A1 = 'f(5).(A1); process P = A1;", "P");
        let steps = single_transitions(&s, &env, &LtsConfig::default()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].labels.actions(), vec![Action::output("f", Value::Int(5))]);
        assert_eq!(steps[0].target.canonical_key().unwrap(), s.canonical_key().unwrap());
        assert_eq!(steps[0].families[&1], vec![BTreeSet::from([2])]);
    }

    #[test]
    fn width_one_equals_single_transitions() {
        let (env, s) = load(
            "process P = (f(x).('g(x).(*)) + 'h(2).(*)) | 'f(1).(*) | g(y).(*);",
            "P",
        );
        let cfg = LtsConfig {
            max_width: Some(1),
            ..LtsConfig::default()
        };
        let multi = multi_transitions(&s, &env, &cfg).unwrap();
        let single = single_transitions(&s, &env, &cfg).unwrap();
        assert_eq!(multi.steps.len(), single.len());
        for m in &multi.steps {
            assert!(single.iter().any(|s| s.same_plan(m) && s.labels == m.labels));
        }
    }

    #[test]
    fn example_three_tau_tau() {
        let (env, s) = load(
            "process P = graph { a: f1(x).('g1(x).(*)); b: f2(y).(*, *); c: 'f1(1).(*); d: 'f2(2).(*, *); \
             edges { a -- c, b -- d } };",
            "P",
        );
        let multi = multi_transitions(&s, &env, &LtsConfig::default()).unwrap();
        let tt: Vec<&LabeledStep> = multi.steps.iter().filter(|m| m.labels == LabelMultiset::taus(2)).collect();
        assert_eq!(tt.len(), 1);
        assert_eq!(tt[0].target.len(), 6);
        assert_eq!(tt[0].target.graph.edge_count(), 5);
        assert!(multi.steps.iter().any(|m| m.labels.actions()
            == vec![Action::input("f1", Value::Int(1)), Action::input("f2", Value::Int(1))]
            && m.labels.size() == 2));
        let report = diamond_check(&s, &env, &LtsConfig::default()).unwrap();
        assert!(report.passed(), "{:?}", report.counterexamples);
        assert!(report.checked > 0);
    }

    #[test]
    fn non_adjacent_duals_stay_visible() {
        let (env, s) = load("process P = 'f(1).(0) <+> f(x).(0);", "P");
        let multi = multi_transitions(&s, &env, &LtsConfig::default()).unwrap();
        assert!(multi.steps.iter().all(|m| m.labels.tau_count() == 0));
        assert!(multi.steps.iter().any(|m| m.labels.size() == 2));
    }

    #[test]
    fn weak_moves_through_taus() {
        let (env, s) = load(
            "def A1 = 'f(5).(A1); def A2 = f(x).(A2); def A3 = f(x).(A3);\n process S = (A1 | A2) <+> A3;",
            "S",
        );
        let lts = Lts::new(&env, LtsConfig::default(), 1000);
        let (key, st) = lts.canon(&s).unwrap();
        let closure = lts.tau_closure(&key, &st).unwrap();
        assert!(closure.0.iter().all(|r| r.key == key));
        let moves = lts.weak_moves(&key, &st, &[Action::output("f", Value::Int(5))]).unwrap();
        assert!(!moves.is_empty());
        let none = lts.weak_moves(&key, &st, &[Action::output("g", Value::Int(5))]).unwrap();
        assert!(none.is_empty());
    }
}
