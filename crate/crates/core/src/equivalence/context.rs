//! Observers that turn a failed approximant into a barbed distinction.
//!
//! For a challenge `Δ` that the other side cannot answer at depth `n`, each
//! label gets a probe `Mᵢ` offering the dual prefix; the probe's first child
//! `Nᵢ` raises a fresh success barb and, for the first label, offers one
//! branch `d(x)·(Mⱼ + c̄ⱼ(0)·(∗))` per defender answer `j`, where `Mⱼ`
//! probes the answer's losing sub-game. Branches are selected by the fuel
//! process `D ≝ d̄(0)·(D)`. The whole context is
//! `((M₁ + ḡ₁(0)·(∗)) ⊕ … ⊕ (Mₖ + ḡₖ(0)·(∗))) | D`.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{BinaryOp, Expr, Value};
use crate::llts::TransLabel;
use crate::reduction::{reachable, Bounds, Status};
use crate::state::{flatten, NetState};
use crate::syntax::{DefEnv, Polarity, ProcTerm};

use super::barbed::weak_barbed_bisim;
use super::weak::{approx, Game, UNEXPLORED};
use super::{GameConfig, Side};

#[derive(Debug, Clone, Serialize)]
pub struct ContextReport {
    /// The observer `R`.
    #[serde(serialize_with = "as_text")]
    pub context: ProcTerm,
    /// Definitions `R` relies on, on top of the input environment.
    #[serde(skip)]
    pub env: DefEnv,
    /// Which challenge shape the outermost probe answers.
    pub case: String,
    /// The side whose challenge is probed.
    pub side: Side,
    /// First depth at which the approximant fails.
    pub depth: usize,
    /// Number of derivatives of the defending side compared.
    pub checked: usize,
    pub verified: bool,
    pub failures: Vec<String>,
}

fn as_text<S: serde::Serializer>(t: &ProcTerm, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&t.to_string())
}

struct Fresh<'a> {
    taken: BTreeSet<String>,
    env: &'a DefEnv,
    next: usize,
}

impl Fresh<'_> {
    fn symbol(&mut self, stem: &str) -> String {
        loop {
            self.next += 1;
            let s = format!("{stem}{}", self.next);
            if self.env.arity(&s).is_none() && !self.env.contains(&s) && self.taken.insert(s.clone()) {
                return s;
            }
        }
    }
}

struct Builder<'g, 'e> {
    game: Game<'g>,
    memo: HashMap<(usize, usize), bool>,
    fresh: Fresh<'e>,
    fuel: String,
    env: &'e DefEnv,
}

impl Builder<'_, '_> {
    /// Probes for the losing challenge of triple `i` at depth `k`: one term
    /// per visible label, or a single term for `τ`.
    fn probe(&mut self, i: usize, k: usize) -> Result<(Side, String, Vec<ProcTerm>)> {
        self.game.expand(i)?;
        let n = self.game.challenges[i].as_ref().map_or(0, |c| c.len());
        let mut chosen = None;
        for ci in 0..n {
            let responses = self.game.challenges[i].as_ref().unwrap()[ci].responses.clone();
            let mut lost = true;
            for r in responses {
                if r == UNEXPLORED || approx(&mut self.game, &mut self.memo, r, k - 1)? {
                    lost = false;
                    break;
                }
            }
            if lost {
                chosen = Some(ci);
                break;
            }
        }
        let ci = chosen.ok_or_else(|| Error::Precondition(format!("no losing challenge at depth {k}")))?;
        let c = &self.game.challenges[i].as_ref().unwrap()[ci];
        let (side, labels, responses) = (c.side, c.labels.clone(), c.responses.clone());

        let mut branches = Vec::new();
        for r in responses {
            let (_, _, sub) = self.probe(r, k - 1)?;
            let mark = self.fresh.symbol("obs_c");
            let mut alts: Vec<ProcTerm> = sub.into_iter().filter(|t| *t != ProcTerm::Nil).collect();
            alts.push(ProcTerm::output(&mark, Expr::int(0), vec![ProcTerm::Idle]));
            branches.push(ProcTerm::input(&self.fuel, "x", vec![ProcTerm::sum_of(alts)]));
        }

        if labels.tau_count() > 0 {
            return Ok((side, "tau".into(), vec![ProcTerm::sum_of(branches)]));
        }
        let mut pieces = Vec::new();
        for (idx, l) in labels.iter().enumerate() {
            let TransLabel::Visible { action, .. } = l else { continue };
            let ok = self.fresh.symbol("obs_ok");
            let mut n_alts = vec![ProcTerm::output(&ok, Expr::int(0), vec![ProcTerm::Idle])];
            if idx == 0 {
                n_alts.extend(branches.iter().cloned());
            }
            let n_term = ProcTerm::sum_of(n_alts);
            let arity = self.env.arity(&action.symbol).unwrap_or(1).max(1);
            let pad = |first: ProcTerm| {
                let mut ch = vec![first];
                ch.resize(arity, ProcTerm::Idle);
                ch
            };
            let m = match action.polarity {
                Polarity::Plain => ProcTerm::output(&action.symbol, Expr::Lit(action.value.clone()), pad(n_term)),
                Polarity::Co => {
                    let test = Expr::binary(BinaryOp::Eq, Expr::var("x"), Expr::Lit(action.value.clone()));
                    ProcTerm::input(&action.symbol, "x", pad(ProcTerm::cond(test, n_term, ProcTerm::Nil)))
                }
            };
            pieces.push(m);
        }
        let case = match pieces.len() {
            1 if labels.iter().any(|l| l.action().is_some_and(|a| a.polarity == Polarity::Plain)) => "single input".into(),
            1 => "single output".into(),
            k => format!("multi-labelled (k={k})"),
        };
        Ok((side, case, pieces))
    }
}

/// Builds an observer `R` from a losing challenge of the approximant game
/// at depth `n` and checks that `X|R` and `Y′|R` are not weakly barbed
/// bisimilar for every bounded derivative `Y′` of the defending side.
pub fn distinguishing_context(p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig, n: usize) -> Result<ContextReport> {
    let game = Game::new(p, q, env, cfg)?;
    let mut taken = BTreeSet::new();
    for s in [p, q] {
        for t in s.comp.values() {
            taken.extend(t.written_symbols());
        }
    }
    let mut fresh = Fresh { taken, env, next: 0 };
    let fuel = fresh.symbol("obs_d");
    let mut b = Builder {
        game,
        memo: HashMap::new(),
        fresh,
        fuel,
        env,
    };
    let mut depth = None;
    for k in 1..=n {
        if !approx(&mut b.game, &mut b.memo, 0, k)? {
            depth = Some(k);
            break;
        }
    }
    let Some(depth) = depth else {
        return Err(Error::Precondition(format!("the pair is not separated up to depth {n}")));
    };
    let (side, case, pieces) = b.probe(0, depth)?;

    let mut parts = Vec::new();
    for m in pieces {
        let g = b.fresh.symbol("obs_g");
        let bar = ProcTerm::output(&g, Expr::int(0), vec![ProcTerm::Idle]);
        parts.push(if m == ProcTerm::Nil { bar } else { ProcTerm::sum(m, bar) });
    }
    let probes = ProcTerm::compose(parts, &[]);
    let d_name = b.fresh.symbol("Obs_D");
    let mut out_env = env.clone();
    out_env.define(&d_name, &[], ProcTerm::output(&b.fuel, Expr::Lit(Value::Int(0)), vec![ProcTerm::constant(&d_name, vec![])]))?;
    let context = ProcTerm::par(probes, ProcTerm::constant(&d_name, vec![]));
    out_env.learn_symbols(&context)?;
    let r = flatten(&context, &out_env)?;

    let (x, y) = match side {
        Side::Left => (p, q),
        Side::Right => (q, p),
    };
    let xr = x.par(&r, &out_env)?;
    let bounds = Bounds {
        max_states: cfg.max_states,
        max_depth: cfg.max_states,
    };
    let ys = reachable(y, &out_env, bounds)?;
    let mut failures = Vec::new();
    if ys.status == Status::Truncated {
        failures.push(format!("derivatives of the {} side exceed {} states", other(side), cfg.max_states));
    }
    for y2 in &ys.states {
        let yr = y2.par(&r, &out_env)?;
        let v = weak_barbed_bisim(&xr, &yr, &out_env, cfg)?.verdict;
        if !v.is_not() {
            failures.push(format!("against {y2}: {v}"));
        }
    }
    Ok(ContextReport {
        context,
        env: out_env,
        case,
        side,
        depth,
        checked: ys.len(),
        verified: failures.is_empty(),
        failures,
    })
}

fn other(s: Side) -> Side {
    match s {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_program;

    fn pair(src: &str) -> (DefEnv, NetState, NetState) {
        let prog = parse_program(src).unwrap();
        let p = flatten(&prog.process("P").unwrap(), &prog.env).unwrap();
        let q = flatten(&prog.process("Q").unwrap(), &prog.env).unwrap();
        (prog.env, p, q)
    }

    #[test]
    fn expansion_law_pair() {
        let (env, p, q) = pair("process P = 'f(1).(0) | 'g(2).(0); process Q = 'f(1).('g(2).(0)) + 'g(2).('f(1).(0));");
        let r = distinguishing_context(&p, &q, &env, &GameConfig::default(), 3).unwrap();
        assert_eq!(r.case, "multi-labelled (k=2)");
        assert_eq!(r.depth, 1);
        assert!(r.verified, "{:?}", r.failures);
    }

    #[test]
    fn single_output_against_silence() {
        let (env, p, q) = pair("process P = 'f(7).(*); process Q = *;");
        let r = distinguishing_context(&p, &q, &env, &GameConfig::default(), 2).unwrap();
        assert_eq!(r.case, "single output");
        assert!(r.verified, "{:?}", r.failures);
    }

    #[test]
    fn nested_answers_get_branches() {
        let (env, p, q) = pair("process P = 'f(1).('g(1).(*)); process Q = 'f(1).('h(1).(*));");
        let r = distinguishing_context(&p, &q, &env, &GameConfig::default(), 3).unwrap();
        assert_eq!(r.depth, 2);
        assert!(r.context.to_string().contains("obs_d"));
        assert!(r.verified, "{:?}", r.failures);
    }

    #[test]
    fn bisimilar_pair_is_rejected() {
        let (env, p, _) = pair("process P = 'f(7).(*); process Q = *;");
        assert!(matches!(
            distinguishing_context(&p, &p, &env, &GameConfig::default(), 2),
            Err(Error::Precondition(_))
        ));
    }
}
