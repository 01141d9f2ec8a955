use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::graph::Loc;
use crate::llts::{LabelMultiset, Lts, TransLabel};
use crate::reduction::Status;
use crate::state::NetState;
use crate::syntax::DefEnv;

use super::{GameConfig, Report, Side, Verdict, Witness};

type Rel = BTreeSet<(Loc, Loc)>;

/// Answer leading past the triple budget; assumed winning for the defender.
pub(super) const UNEXPLORED: usize = usize::MAX;

/// `(P, E, Q)` over canonical representatives.
#[derive(Clone)]
struct Triple {
    p_key: String,
    p: Arc<NetState>,
    q_key: String,
    q: Arc<NetState>,
    e: Rel,
}

impl Triple {
    fn key(&self) -> String {
        let e: Vec<String> = self.e.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        format!("{}\u{1}{}\u{1}{}", self.p_key, self.q_key, e.join(","))
    }
}

pub(super) struct Challenge {
    pub(super) side: Side,
    pub(super) labels: LabelMultiset,
    pub(super) target: String,
    pub(super) responses: Vec<usize>,
}

/// The game graph over triples, expanded on demand.
pub(super) struct Game<'a> {
    lts: Lts<'a>,
    triples: Vec<Triple>,
    index: HashMap<String, usize>,
    pub(super) challenges: Vec<Option<Vec<Challenge>>>,
    max: usize,
    truncated: bool,
}

type Response = (String, Arc<NetState>, String, Arc<NetState>, Rel);

impl<'a> Game<'a> {
    pub(super) fn new(p: &NetState, q: &NetState, env: &'a DefEnv, cfg: &GameConfig) -> Result<Game<'a>> {
        let lts = Lts::new(env, cfg.lts.clone(), cfg.max_closure);
        let (p_key, p) = lts.canon(p)?;
        let (q_key, q) = lts.canon(q)?;
        let e = p.locations().flat_map(|a| q.locations().map(move |b| (a, b))).collect();
        let mut g = Game {
            lts,
            triples: Vec::new(),
            index: HashMap::new(),
            challenges: Vec::new(),
            max: cfg.max_states,
            truncated: false,
        };
        g.intern(Triple {
            p_key,
            p,
            q_key,
            q,
            e,
        });
        Ok(g)
    }

    fn intern(&mut self, t: Triple) -> Option<usize> {
        let k = t.key();
        if let Some(&i) = self.index.get(&k) {
            return Some(i);
        }
        if self.triples.len() >= self.max {
            self.truncated = true;
            return None;
        }
        let i = self.triples.len();
        self.index.insert(k, i);
        self.triples.push(t);
        self.challenges.push(None);
        Some(i)
    }

    pub(super) fn expand(&mut self, i: usize) -> Result<()> {
        if self.challenges[i].is_some() {
            return Ok(());
        }
        let t = self.triples[i].clone();
        let mut out = Vec::new();
        for (labels, target, responses) in self.one_side(&t.p_key, &t.p, &t.q_key, &t.q, &t.e)? {
            let responses = responses
                .into_iter()
                .map(|(pk, p, qk, q, e)| {
                    self.intern(Triple {
                        p_key: pk,
                        p,
                        q_key: qk,
                        q,
                        e,
                    })
                    .unwrap_or(UNEXPLORED)
                })
                .collect();
            out.push(Challenge {
                side: Side::Left,
                labels,
                target,
                responses,
            });
        }
        let et: Rel = t.e.iter().map(|&(a, b)| (b, a)).collect();
        for (labels, target, responses) in self.one_side(&t.q_key, &t.q, &t.p_key, &t.p, &et)? {
            let responses = responses
                .into_iter()
                .map(|(qk, q, pk, p, e)| {
                    self.intern(Triple {
                        p_key: pk,
                        p,
                        q_key: qk,
                        q,
                        e: e.into_iter().map(|(a, b)| (b, a)).collect(),
                    })
                    .unwrap_or(UNEXPLORED)
                })
                .collect();
            out.push(Challenge {
                side: Side::Right,
                labels,
                target,
                responses,
            });
        }
        self.challenges[i] = Some(out);
        Ok(())
    }

    /// Challenges by the state `x` against `y` under `e ⊆ |x|×|y|`, each
    /// with every defender answer and its maximal conforming relation.
    #[allow(clippy::type_complexity)]
    fn one_side(
        &self,
        xk: &str,
        x: &Arc<NetState>,
        yk: &str,
        y: &Arc<NetState>,
        e: &Rel,
    ) -> Result<Vec<(LabelMultiset, String, Vec<Response>)>> {
        let steps = self.lts.steps(xk, x)?;
        let mut out = Vec::new();
        for s in &steps.0 {
            let tau = s.labels == LabelMultiset::taus(1);
            if !tau && !s.labels.is_visible_only() {
                continue;
            }
            let shape = s.labels.actions();
            let mut mine: Vec<(crate::llts::Action, Loc)> = s
                .labels
                .iter()
                .filter_map(|l| match l {
                    TransLabel::Visible { loc, action, .. } => Some((action.clone(), *loc)),
                    TransLabel::Tau => None,
                })
                .collect();
            mine.sort();
            let moves = self.lts.weak_moves(yk, y, &shape)?;
            let mut responses = Vec::new();
            for m in moves.iter() {
                let located = mine
                    .iter()
                    .zip(&m.label_locs)
                    .all(|((a, p), (b, q))| a == b && e.contains(&(*p, *q)));
                if !located {
                    continue;
                }
                let e2: Rel = s
                    .target
                    .locations()
                    .flat_map(|a| m.target.locations().map(move |b| (a, b)))
                    .filter(|(a, b)| e.contains(&(s.residual[a], m.residual[b])))
                    .collect();
                responses.push((s.key.clone(), s.target.clone(), m.key.clone(), m.target.clone(), e2));
            }
            out.push((s.labels.clone(), s.target.to_string(), responses));
        }
        Ok(out)
    }

    pub(super) fn truncated(&self) -> bool {
        self.truncated || self.lts.truncated()
    }

    /// Describes the first unanswered challenge at `i`, then follows the
    /// lost answers for a few rounds.
    fn play(&self, start: usize, lost: &dyn Fn(usize) -> Option<usize>) -> (Side, LabelMultiset, Vec<String>) {
        let mut lines = Vec::new();
        let mut cur = start;
        let mut seen = BTreeSet::new();
        let mut first = None;
        while seen.insert(cur) && lines.len() < 8 {
            let Some(ci) = lost(cur) else { break };
            let c = &self.challenges[cur].as_ref().unwrap()[ci];
            if first.is_none() {
                first = Some((c.side, c.labels.clone()));
            }
            if c.responses.is_empty() {
                lines.push(format!("{} side plays {} reaching {}; no answer exists", c.side, c.labels, c.target));
                break;
            }
            lines.push(format!(
                "{} side plays {} reaching {}; all {} answers lose",
                c.side,
                c.labels,
                c.target,
                c.responses.len()
            ));
            cur = c.responses[0];
            if cur == UNEXPLORED {
                break;
            }
        }
        let (side, labels) = first.unwrap_or((Side::Left, LabelMultiset::default()));
        (side, labels, lines)
    }
}

/// Decides `(P, |P|×|Q|, Q) ∈ ≈` by exploring the reachable triples and
/// removing losing ones until the greatest fixpoint.
///
/// Triples beyond the budget are assumed winning, so a negative verdict is
/// reliable even when the exploration is cut; a positive one is not.
pub fn weak_bisim(p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<Report> {
    let mut game = Game::new(p, q, env, cfg)?;
    let mut queue = VecDeque::from([0usize]);
    let mut expanded = vec![false; 1];
    while let Some(i) = queue.pop_front() {
        game.expand(i)?;
        expanded.resize(game.triples.len(), false);
        expanded[i] = true;
        for c in game.challenges[i].as_ref().unwrap() {
            for &r in &c.responses {
                if r != UNEXPLORED && !expanded[r] && !queue.contains(&r) {
                    queue.push_back(r);
                }
            }
        }
    }
    let n = game.triples.len();
    let mut good = vec![true; n];
    let mut killer: Vec<Option<usize>> = vec![None; n];
    loop {
        let mut changed = false;
        for i in 0..n {
            if !good[i] {
                continue;
            }
            let Some(cs) = &game.challenges[i] else { continue };
            if let Some(ci) = cs.iter().position(|c| c.responses.iter().all(|&r| r != UNEXPLORED && !good[r])) {
                good[i] = false;
                killer[i] = Some(ci);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut warnings = Vec::new();
    if game.truncated() {
        warnings.push(format!("exploration budget reached after {n} triples"));
    }
    let verdict = if !good[0] {
        let (side, labels, play) = game.play(0, &|i| killer[i]);
        Verdict::Not {
            witness: Witness {
                side,
                barb: None,
                multiset: Some(labels),
                play,
            },
        }
    } else if game.truncated() {
        Verdict::Inconclusive {
            reason: warnings[0].clone(),
        }
    } else {
        Verdict::Bisimilar
    };
    Ok(Report {
        checker: "weak".into(),
        verdict,
        explored: n,
        warnings,
        strata: None,
    })
}

/// Verdicts of `≈₀ … ≈ₙ` on the starting triple.
#[derive(Debug, Clone, Serialize)]
pub struct StrataReport {
    pub verdicts: Vec<bool>,
    /// A play refuting the first failing approximant.
    pub witness: Option<Witness>,
    pub truncated: bool,
    pub explored: usize,
}

impl StrataReport {
    /// The deepest verdict; bisimilar only if nothing was cut.
    pub fn into_report(self) -> Report {
        let last = *self.verdicts.last().unwrap_or(&true);
        let mut warnings = Vec::new();
        if self.truncated {
            warnings.push(format!("exploration budget reached after {} triples", self.explored));
        }
        let verdict = match (&self.witness, last) {
            (Some(w), false) => Verdict::Not { witness: w.clone() },
            _ if self.truncated => Verdict::Inconclusive {
                reason: warnings[0].clone(),
            },
            _ => Verdict::Bisimilar,
        };
        Report {
            checker: "strata".into(),
            verdict,
            explored: self.explored,
            warnings,
            strata: Some(self.verdicts),
        }
    }

    /// The first depth at which the approximant fails.
    pub fn separating_depth(&self) -> Option<usize> {
        self.verdicts.iter().position(|v| !v)
    }
}

/// The stratified approximants, each computed directly from its recursive
/// definition with memoisation on (triple, depth).
pub fn stratified_bisim(p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig, n: usize) -> Result<StrataReport> {
    let mut game = Game::new(p, q, env, cfg)?;
    let mut memo: HashMap<(usize, usize), bool> = HashMap::new();
    let mut verdicts = Vec::with_capacity(n + 1);
    for k in 0..=n {
        verdicts.push(approx(&mut game, &mut memo, 0, k)?);
    }
    let witness = match verdicts.iter().position(|v| !v) {
        Some(k) => {
            let lost = |i: usize| -> Option<usize> {
                // The depth left at triple `i` is unknown along the play; the
                // smallest failing depth is used instead.
                let d = (1..=k).find(|&d| memo.get(&(i, d)) == Some(&false))?;
                game.challenges[i]
                    .as_ref()?
                    .iter()
                    .position(|c| c.responses.iter().all(|&r| r != UNEXPLORED && memo.get(&(r, d - 1)) == Some(&false)))
            };
            let (side, labels, play) = game.play(0, &lost);
            Some(Witness {
                side,
                barb: None,
                multiset: Some(labels),
                play,
            })
        }
        None => None,
    };
    Ok(StrataReport {
        verdicts,
        witness,
        truncated: game.truncated(),
        explored: game.triples.len(),
    })
}

pub(super) fn approx(game: &mut Game, memo: &mut HashMap<(usize, usize), bool>, i: usize, n: usize) -> Result<bool> {
    if n == 0 {
        return Ok(true);
    }
    if let Some(&v) = memo.get(&(i, n)) {
        return Ok(v);
    }
    game.expand(i)?;
    let plan: Vec<Vec<usize>> = game.challenges[i]
        .as_ref()
        .unwrap()
        .iter()
        .map(|c| c.responses.clone())
        .collect();
    let mut ok = true;
    'challenges: for responses in plan {
        for r in responses {
            if r == UNEXPLORED || approx(game, memo, r, n - 1)? {
                continue 'challenges;
            }
        }
        ok = false;
        break;
    }
    memo.insert((i, n), ok);
    Ok(ok)
}

/// Branching statistics of the multi-labelled system from a state.
#[derive(Debug, Clone, Serialize)]
pub struct ImageReport {
    pub states: usize,
    /// Largest number of distinct label multisets leaving one state.
    pub max_multisets: usize,
    /// Largest weak-transition image for one label shape.
    pub max_weak_image: usize,
    pub finitely_branching: bool,
    pub warnings: Vec<String>,
}

/// Explores the states reachable by multi-labelled transitions and checks
/// that every image stays finite within the budgets.
pub fn image_finite_guard(p: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<ImageReport> {
    let lts = Lts::new(env, cfg.lts.clone(), cfg.max_closure);
    let (k0, s0) = lts.canon(p)?;
    let mut seen: HashMap<String, ()> = HashMap::from([(k0.clone(), ())]);
    let mut queue = VecDeque::from([(k0, s0)]);
    let mut report = ImageReport {
        states: 0,
        max_multisets: 0,
        max_weak_image: 0,
        finitely_branching: true,
        warnings: Vec::new(),
    };
    while let Some((k, s)) = queue.pop_front() {
        report.states += 1;
        let steps = lts.steps(&k, &s)?;
        if steps.1 == Status::Truncated {
            report.finitely_branching = false;
            report.warnings.push(format!("width bound cut the transitions of {s}"));
        }
        let multisets: BTreeSet<&LabelMultiset> = steps.0.iter().map(|t| &t.labels).collect();
        report.max_multisets = report.max_multisets.max(multisets.len());
        let shapes: BTreeSet<Vec<crate::llts::Action>> = steps
            .0
            .iter()
            .filter(|t| t.labels.is_visible_only())
            .map(|t| t.labels.actions())
            .chain(std::iter::once(Vec::new()))
            .collect();
        for shape in shapes {
            let w = lts.weak_moves(&k, &s, &shape)?;
            report.max_weak_image = report.max_weak_image.max(w.len());
        }
        for t in &steps.0 {
            if seen.contains_key(&t.key) {
                continue;
            }
            if seen.len() >= cfg.max_states {
                report.finitely_branching = false;
                report.warnings.push(format!("state budget of {} reached", cfg.max_states));
                queue.clear();
                break;
            }
            seen.insert(t.key.clone(), ());
            queue.push_back((t.key.clone(), t.target.clone()));
        }
    }
    if lts.truncated() && report.finitely_branching {
        report.finitely_branching = false;
        report.warnings.push(format!("a tau closure exceeded {} entries", cfg.max_closure));
    }
    Ok(report)
}
