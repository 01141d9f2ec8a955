use std::collections::{BTreeSet, VecDeque};

use crate::error::Result;
use crate::reduction::{reachable, Bounds, Redex, StateSpace, Status};
use crate::state::NetState;
use crate::syntax::{DefEnv, Symbol};

use super::{GameConfig, Report, Side, Verdict, Witness};

/// Barb alphabets beyond this many symbols are refused.
const MAX_ALPHABET: usize = 24;

#[derive(Clone)]
enum Reason {
    Barb(Side, u32),
    Move(Side, Redex, usize, usize),
}

/// Greatest weak barbed bisimulation between the reduction graphs of `p`
/// and `q`, computed by refinement on their product.
pub fn weak_barbed_bisim(p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<Report> {
    let bounds = Bounds {
        max_states: cfg.max_states,
        max_depth: cfg.max_states,
    };
    let sp = reachable(p, env, bounds)?;
    let sq = reachable(q, env, bounds)?;
    let explored = sp.len() + sq.len();
    let report = |verdict| Report {
        checker: "barbed".into(),
        verdict,
        explored,
        warnings: Vec::new(),
        strata: None,
    };
    if sp.status == Status::Truncated || sq.status == Status::Truncated {
        return Ok(report(Verdict::Inconclusive {
            reason: format!("reduction graph exceeded {} states", cfg.max_states),
        }));
    }
    let mut alphabet: BTreeSet<Symbol> = BTreeSet::new();
    for s in sp.states.iter().chain(&sq.states) {
        for (_, b) in s.barb_signature(env)? {
            alphabet.extend(b);
        }
    }
    if alphabet.len() > MAX_ALPHABET {
        return Ok(report(Verdict::Inconclusive {
            reason: format!("barb alphabet has {} symbols", alphabet.len()),
        }));
    }
    let alphabet: Vec<Symbol> = alphabet.into_iter().collect();
    let sat = |space: &StateSpace| -> Result<Vec<BTreeSet<u32>>> {
        space.states.iter().map(|s| satisfiable_sets(s, env, &alphabet)).collect()
    };
    let (sat_p, sat_q) = (sat(&sp)?, sat(&sq)?);
    let closures_p: Vec<Vec<usize>> = (0..sp.len()).map(|i| sp.closure(i)).collect();
    let closures_q: Vec<Vec<usize>> = (0..sq.len()).map(|i| sq.closure(i)).collect();
    let weak = |sat: &[BTreeSet<u32>], cl: &[Vec<usize>]| -> Vec<BTreeSet<u32>> {
        cl.iter().map(|c| c.iter().flat_map(|&j| sat[j].iter().copied()).collect()).collect()
    };
    let (wsat_p, wsat_q) = (weak(&sat_p, &closures_p), weak(&sat_q, &closures_q));

    let (np, nq) = (sp.len(), sq.len());
    let mut related = vec![true; np * nq];
    let mut reason: Vec<Option<Reason>> = vec![None; np * nq];
    for i in 0..np {
        for j in 0..nq {
            if let Some(b) = sat_p[i].iter().find(|b| !wsat_q[j].contains(b)) {
                related[i * nq + j] = false;
                reason[i * nq + j] = Some(Reason::Barb(Side::Left, *b));
            } else if let Some(b) = sat_q[j].iter().find(|b| !wsat_p[i].contains(b)) {
                related[i * nq + j] = false;
                reason[i * nq + j] = Some(Reason::Barb(Side::Right, *b));
            }
        }
    }
    loop {
        let mut changed = false;
        for i in 0..np {
            for j in 0..nq {
                if !related[i * nq + j] {
                    continue;
                }
                let left = sp.succ[i].iter().find(|(i2, _)| !closures_q[j].iter().any(|&j2| related[i2 * nq + j2]));
                let right = sq.succ[j].iter().find(|(j2, _)| !closures_p[i].iter().any(|&i2| related[i2 * nq + j2]));
                let why = match (left, right) {
                    (Some((i2, r)), _) => Some(Reason::Move(Side::Left, r.clone(), *i2, j)),
                    (None, Some((j2, r))) => Some(Reason::Move(Side::Right, r.clone(), i, *j2)),
                    (None, None) => None,
                };
                if let Some(w) = why {
                    related[i * nq + j] = false;
                    reason[i * nq + j] = Some(w);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if related[0] {
        return Ok(report(Verdict::Bisimilar));
    }

    // Unroll the recorded reasons into a play.
    let mut play = Vec::new();
    let mut first: Option<(Side, Option<BTreeSet<Symbol>>)> = None;
    let mut cur = (0usize, 0usize);
    let mut visited = BTreeSet::new();
    let decode = |m: u32| -> BTreeSet<Symbol> {
        (0..alphabet.len()).filter(|k| m & (1 << k) != 0).map(|k| alphabet[k].clone()).collect()
    };
    let mut queue = VecDeque::from([cur]);
    while let Some(c) = queue.pop_front() {
        cur = c;
        if !visited.insert(cur) || play.len() > 16 {
            break;
        }
        match reason[cur.0 * nq + cur.1].clone() {
            Some(Reason::Barb(side, b)) => {
                let b = decode(b);
                let names: Vec<String> = b.iter().map(|s| s.to_string()).collect();
                play.push(format!("{side} side exhibits {{{}}}; the other never does", names.join(", ")));
                if first.is_none() {
                    first = Some((side, Some(b)));
                }
            }
            Some(Reason::Move(side, redex, i2, j2)) => {
                let target = match side {
                    Side::Left => &sp.states[i2],
                    Side::Right => &sq.states[j2],
                };
                play.push(format!("{side} side reduces ({redex}) to {target}; no derivative of the other side stays related"));
                if first.is_none() {
                    first = Some((side, None));
                }
                // Continue with the opponent's first derivative.
                let next = match side {
                    Side::Left => (i2, closures_q[j2.min(nq - 1)][0]),
                    Side::Right => (closures_p[i2][0], j2),
                };
                queue.push_back(next);
            }
            None => break,
        }
    }
    let (side, barb) = first.unwrap_or((Side::Left, None));
    Ok(report(Verdict::Not {
        witness: Witness {
            side,
            barb,
            multiset: None,
            play,
        },
    }))
}

/// Bitmasks over `alphabet` of every `B` with `state↓B`.
fn satisfiable_sets(state: &NetState, env: &DefEnv, alphabet: &[Symbol]) -> Result<BTreeSet<u32>> {
    let family: Vec<u32> = state
        .barb_signature(env)?
        .into_iter()
        .map(|(_, b)| {
            b.iter()
                .filter_map(|s| alphabet.iter().position(|a| a == s))
                .fold(0u32, |m, k| m | (1 << k))
        })
        .filter(|&m| m != 0)
        .collect();
    let mut out = BTreeSet::new();
    fn rec(k: usize, family: &[u32], acc: u32, out: &mut BTreeSet<u32>) {
        if k == family.len() {
            out.insert(acc);
            return;
        }
        rec(k + 1, family, acc, out);
        let mut bits = family[k] & !acc;
        while bits != 0 {
            let b = bits & bits.wrapping_neg();
            rec(k + 1, family, acc | b, out);
            bits &= !b;
        }
    }
    rec(0, &family, 0, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;
    use crate::state::flatten;

    fn pair(src: &str) -> (DefEnv, NetState, NetState) {
        let prog = parse_program(src).unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        let q = flatten(&prog.process("Q").unwrap(), &prog.env).unwrap();
        (prog.env, p, q)
    }

    #[test]
    fn reflexive() {
        let (env, p, _) = pair("process P = f(x).('g(x).(*)) | 'f(1).(*); process Q = 0;");
        let r = weak_barbed_bisim(&p, &p, &env, &GameConfig::default()).unwrap();
        assert!(r.verdict.is_bisimilar());
    }

    #[test]
    fn interleaving_is_told_apart_by_a_joint_barb() {
        let (env, p, q) = pair("process P = 'f(1).(0) | 'g(2).(0); process Q = 'f(1).('g(2).(0)) + 'g(2).('f(1).(0));");
        let r = weak_barbed_bisim(&p, &q, &env, &GameConfig::default()).unwrap();
        let w = r.verdict.witness().expect("distinguished");
        assert_eq!(w.side, Side::Left);
        let b: Vec<String> = w.barb.as_ref().unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(b, vec!["'f", "'g"]);
        let swapped = weak_barbed_bisim(&q, &p, &env, &GameConfig::default()).unwrap();
        assert!(swapped.verdict.is_not());
    }

    #[test]
    fn idle_padding_is_invisible() {
        let (env, p, q) = pair("process P = f(x).(*) | 'f(1).(*); process Q = (f(x).(*) | 'f(1).(*)) | *;");
        assert!(weak_barbed_bisim(&p, &q, &env, &GameConfig::default()).unwrap().verdict.is_bisimilar());
    }

    #[test]
    fn satisfiable_sets_respect_distinct_locations() {
        let (env, p, _) = pair("process P = 'f(3).(*, *) | 'g(4).(*, *); process Q = 0;");
        let alphabet: Vec<Symbol> = vec![
            Symbol::new("f", 2, crate::syntax::Polarity::Co),
            Symbol::new("g", 2, crate::syntax::Polarity::Co),
        ];
        assert_eq!(satisfiable_sets(&p, &env, &alphabet).unwrap(), BTreeSet::from([0, 1, 2, 3]));
    }
}
