//! Internal reductions: a component with an input head reacts with an
//! adjacent component offering the dual output.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::expr::Value;
use crate::graph::{Loc, ResidualMap};
use crate::state::{Head, NetState};
use crate::syntax::DefEnv;

/// The pair of summands that reacted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Redex {
    /// Location of the input.
    pub p: Loc,
    /// Location of the output.
    pub q: Loc,
    pub symbol: String,
    pub value: Value,
    pub input_summand: usize,
    pub output_summand: usize,
}

impl fmt::Display for Redex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{} <-> {}:'{} carrying {}", self.p, self.symbol, self.q, self.symbol, self.value)
    }
}

#[derive(Debug, Clone)]
pub struct ReductionStep {
    pub target: NetState,
    pub fired: Redex,
    pub residual: ResidualMap,
    /// Locations of each input child in the target.
    pub input_family: Vec<BTreeSet<Loc>>,
    /// Locations of each output child in the target.
    pub output_family: Vec<BTreeSet<Loc>>,
}

/// All one-step internal reductions, ordered by edge, then by summand pair.
/// Restriction never blocks a reaction.
pub fn internal_steps(state: &NetState, env: &DefEnv) -> Result<Vec<ReductionStep>> {
    let mut steps = Vec::new();
    for (a, b) in state.graph.edges() {
        for (p, q) in [(a, b), (b, a)] {
            let hp = state.heads(p, env)?;
            let hq = state.heads(q, env)?;
            for (i, inp) in hp.summands.iter().enumerate() {
                let Head::Input { symbol: f, .. } = inp else { continue };
                for (j, out) in hq.summands.iter().enumerate() {
                    let Head::Output {
                        symbol: g,
                        value,
                        children,
                    } = out
                    else {
                        continue;
                    };
                    if f != g {
                        continue;
                    }
                    let parts = [(p, inp.children_with(value)), (q, children.clone())];
                    let fired = state.fire(&parts, env)?;
                    let mut families = fired.families.into_iter();
                    steps.push(ReductionStep {
                        target: fired.target,
                        fired: Redex {
                            p,
                            q,
                            symbol: f.clone(),
                            value: value.clone(),
                            input_summand: i,
                            output_summand: j,
                        },
                        residual: fired.residual,
                        input_family: families.next().unwrap_or_default(),
                        output_family: families.next().unwrap_or_default(),
                    });
                }
            }
        }
    }
    Ok(steps)
}

/// Exploration budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub max_states: usize,
    pub max_depth: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_states: 20_000,
            max_depth: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Complete,
    Truncated,
}

/// A reduction graph quotiented by canonical keys. State 0 is the initial
/// state; states are stored as canonical representatives.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub states: Vec<NetState>,
    pub keys: Vec<String>,
    pub index: HashMap<String, usize>,
    /// Successor indices with the redex that led there.
    pub succ: Vec<Vec<(usize, Redex)>>,
    /// BFS parent and the redex from it, for witness traces.
    pub parent: Vec<Option<(usize, Redex)>>,
    pub depth: Vec<usize>,
    pub status: Status,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    /// The redex sequence from the initial state to `i`.
    pub fn trace_to(&self, mut i: usize) -> Vec<(Redex, usize)> {
        let mut out = Vec::new();
        while let Some((from, r)) = &self.parent[i] {
            out.push((r.clone(), i));
            i = *from;
        }
        out.reverse();
        out
    }

    /// Indices reachable from `i` under `→*` (including `i`).
    pub fn closure(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        let mut out = Vec::new();
        while let Some(s) = queue.pop_front() {
            out.push(s);
            for (t, _) in &self.succ[s] {
                if !seen[*t] {
                    seen[*t] = true;
                    queue.push_back(*t);
                }
            }
        }
        out
    }
}

/// Breadth-first `→*` exploration up to the bounds. Each frontier is
/// expanded in parallel; merging happens in frontier order, so the result
/// does not depend on scheduling.
pub fn reachable(state: &NetState, env: &DefEnv, bounds: Bounds) -> Result<StateSpace> {
    explore(state, env, bounds, |_| Ok(false)).map(|(s, _)| s)
}

/// Outcome of an idle search.
#[derive(Debug, Clone)]
pub struct IdleSearch {
    pub reached: bool,
    pub status: Status,
    /// Redexes and intermediate states from the initial state to an idle one.
    pub witness: Vec<(Redex, NetState)>,
    pub explored: usize,
}

/// Whether some reachable state has `∗` at every location.
pub fn reduces_to_idle(state: &NetState, env: &DefEnv, bounds: Bounds) -> Result<IdleSearch> {
    let (space, hit) = explore(state, env, bounds, |s| s.is_idle(env))?;
    Ok(match hit {
        Some(i) => IdleSearch {
            reached: true,
            status: space.status,
            witness: space
                .trace_to(i)
                .into_iter()
                .map(|(r, j)| (r, space.states[j].clone()))
                .collect(),
            explored: space.len(),
        },
        None => IdleSearch {
            reached: false,
            status: space.status,
            witness: Vec::new(),
            explored: space.len(),
        },
    })
}

/// Explores until `stop` holds for some state, returning its index.
pub fn explore(
    state: &NetState,
    env: &DefEnv,
    bounds: Bounds,
    stop: impl Fn(&NetState) -> Result<bool>,
) -> Result<(StateSpace, Option<usize>)> {
    let root = state.canonical(env)?;
    let mut space = StateSpace {
        states: vec![root.state],
        keys: vec![root.key.clone()],
        index: HashMap::from([(root.key, 0)]),
        succ: vec![Vec::new()],
        parent: vec![None],
        depth: vec![0],
        status: Status::Complete,
    };
    if stop(&space.states[0])? {
        return Ok((space, Some(0)));
    }
    let mut frontier = vec![0usize];
    let mut depth = 0;
    while !frontier.is_empty() {
        if depth >= bounds.max_depth {
            space.status = Status::Truncated;
            break;
        }
        depth += 1;
        let expanded: Vec<Result<Vec<(String, NetState, Redex)>>> = frontier
            .par_iter()
            .map(|&i| {
                internal_steps(&space.states[i], env)?
                    .into_iter()
                    .map(|s| {
                        let c = s.target.canonical(env)?;
                        Ok((c.key, c.state, s.fired))
                    })
                    .collect()
            })
            .collect();
        let mut next = Vec::new();
        for (&i, succs) in frontier.iter().zip(expanded) {
            for (key, st, redex) in succs? {
                let j = match space.index.get(&key) {
                    Some(&j) => j,
                    None => {
                        if space.states.len() >= bounds.max_states {
                            space.status = Status::Truncated;
                            continue;
                        }
                        let j = space.states.len();
                        let hit = stop(&st)?;
                        space.index.insert(key.clone(), j);
                        space.keys.push(key);
                        space.states.push(st);
                        space.succ.push(Vec::new());
                        space.parent.push(Some((i, redex.clone())));
                        space.depth.push(depth);
                        if hit {
                            space.succ[i].push((j, redex));
                            return Ok((space, Some(j)));
                        }
                        next.push(j);
                        j
                    }
                };
                space.succ[i].push((j, redex));
            }
        }
        frontier = next;
    }
    Ok((space, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;
    use crate::state::flatten;
    use crate::syntax::ProcTerm;

    fn load(src: &str, name: &str) -> (DefEnv, NetState) {
        let prog = parse_program(src).unwrap();
        let st = flatten(&prog.process(name).unwrap(), &prog.env).unwrap();
        (prog.env, st)
    }

    #[test]
    fn single_reaction_joins_children() {
        let (env, s) = load("process P = f(x).(*) | 'f(3).(*);", "P");
        let steps = internal_steps(&s, &env).unwrap();
        assert_eq!(steps.len(), 1);
        let t = &steps[0].target;
        assert_eq!(t.len(), 2);
        assert_eq!(t.graph.edge_count(), 1);
        assert!(t.comp.values().all(|c| *c == ProcTerm::Idle));
        assert_eq!(steps[0].fired.value, Value::Int(3));
        let space = reachable(&s, &env, Bounds::default()).unwrap();
        assert_eq!((space.len(), space.status), (2, Status::Complete));
    }

    #[test]
    fn example_two_loops_on_itself() {
        let (env, s) = load(
            "def A1 = 'f(5).(A1); def A2 = f(x).(A2); def A3 = f(x).(A3);\n process S = (A1 | A2) <+> A3;",
            "S",
        );
        let steps = internal_steps(&s, &env).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!((steps[0].fired.p, steps[0].fired.q), (2, 1));
        assert_eq!(steps[0].target.canonical_key().unwrap(), s.canonical_key().unwrap());
        let space = reachable(&s, &env, Bounds::default()).unwrap();
        assert_eq!((space.len(), space.status), (1, Status::Complete));
    }

    #[test]
    fn idle_pairs_do_not_react() {
        let (env, s) = load("process P = * <+> *;", "P");
        assert!(internal_steps(&s, &env).unwrap().is_empty());
        assert!(reduces_to_idle(&s, &env, Bounds::default()).unwrap().reached);
        let (env, z) = load("process Z = 0;", "Z");
        assert!(!reduces_to_idle(&z, &env, Bounds::default()).unwrap().reached);
    }

    #[test]
    fn one_sided_restriction_keeps_names_apart() {
        let (env, s) = load("process P = (f(x).(*) \\ {f}) | 'f(1).(*);", "P");
        assert!(internal_steps(&s, &env).unwrap().is_empty());
        assert!(!reduces_to_idle(&s, &env, Bounds::default()).unwrap().reached);
    }

    #[test]
    fn restricted_symbols_still_react() {
        let (env, s) = load("process P = (f(x).(*) | 'f(1).(*)) \\ {f};", "P");
        let r = reduces_to_idle(&s, &env, Bounds::default()).unwrap();
        assert!(r.reached);
        assert_eq!(r.witness.len(), 1);
    }

    #[test]
    fn truncation_is_a_status() {
        let (env, s) = load("def C(n) = 'f(n).(C(n + 1)); def R = f(x).(R);\n process P = C(0) | R;", "P");
        let space = reachable(&s, &env, Bounds { max_states: 5, max_depth: 100 }).unwrap();
        assert_eq!(space.status, Status::Truncated);
        assert_eq!(space.len(), 5);
    }
}
