//! Equivalence checking on finite slices: weak barbed bisimilarity over
//! reductions, localized early weak bisimilarity over the multi-labelled
//! system, its stratified approximants, and the construction of
//! distinguishing contexts.
//!
//! Every verdict is relative to the budgets in [`GameConfig`]; a budget
//! breach yields [`Verdict::Inconclusive`].

mod barbed;
mod context;
mod weak;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::llts::{LabelMultiset, LtsConfig};
use crate::state::NetState;
use crate::syntax::{DefEnv, Symbol};

pub use barbed::weak_barbed_bisim;
pub use context::{distinguishing_context, ContextReport};
pub use weak::{image_finite_guard, stratified_bisim, weak_bisim, ImageReport, StrataReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GameConfig {
    pub lts: LtsConfig,
    /// Largest `τ*` closure per state.
    pub max_closure: usize,
    /// Largest number of states (barbed) or triples (weak) explored.
    pub max_states: usize,
    /// Approximant depth for the stratified check.
    pub depth: usize,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            lts: LtsConfig::default(),
            max_closure: 2_000,
            max_states: 20_000,
            depth: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Why two states were told apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    /// The side whose move or barb the other cannot match.
    pub side: Side,
    /// A barb set exhibited by `side` and never reached by the other.
    pub barb: Option<BTreeSet<Symbol>>,
    /// The unmatched challenge of the opening round.
    pub multiset: Option<LabelMultiset>,
    /// The play, one line per round.
    pub play: Vec<String>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(b) = &self.barb {
            let v: Vec<String> = b.iter().map(|s| s.to_string()).collect();
            write!(f, "{} side exhibits barb {{{}}}", self.side, v.join(", "))?;
        } else if let Some(m) = &self.multiset {
            write!(f, "{} side plays {m}", self.side)?;
        } else {
            write!(f, "{} side wins", self.side)?;
        }
        for line in &self.play {
            write!(f, "\n  {line}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Bisimilar,
    Not { witness: Witness },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_bisimilar(&self) -> bool {
        matches!(self, Verdict::Bisimilar)
    }

    pub fn is_not(&self) -> bool {
        matches!(self, Verdict::Not { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            Verdict::Not { witness } => Some(witness),
            _ => None,
        }
    }

    /// 0 for bisimilar, 1 for distinguished, 2 for inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Bisimilar => 0,
            Verdict::Not { .. } => 1,
            Verdict::Inconclusive { .. } => 2,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Bisimilar => f.write_str("bisimilar"),
            Verdict::Not { witness } => write!(f, "not bisimilar: {witness}"),
            Verdict::Inconclusive { reason } => write!(f, "inconclusive: {reason}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub checker: String,
    pub verdict: Verdict,
    /// States or triples visited.
    pub explored: usize,
    pub warnings: Vec<String>,
    /// Per-depth verdicts of the stratified check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<bool>>,
}

/// A named equivalence decider.
pub trait EquivalenceChecker: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn check(&self, p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<Report>;
}

struct Barbed;
struct Weak;
struct Strata;

impl EquivalenceChecker for Barbed {
    fn name(&self) -> &'static str {
        "barbed"
    }

    fn description(&self) -> &'static str {
        "weak barbed bisimilarity over internal reductions"
    }

    fn check(&self, p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<Report> {
        weak_barbed_bisim(p, q, env, cfg)
    }
}

impl EquivalenceChecker for Weak {
    fn name(&self) -> &'static str {
        "weak"
    }

    fn description(&self) -> &'static str {
        "localized early weak bisimilarity (greatest fixpoint)"
    }

    fn check(&self, p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<Report> {
        weak_bisim(p, q, env, cfg)
    }
}

impl EquivalenceChecker for Strata {
    fn name(&self) -> &'static str {
        "strata"
    }

    fn description(&self) -> &'static str {
        "stratified approximants up to the configured depth"
    }

    fn check(&self, p: &NetState, q: &NetState, env: &DefEnv, cfg: &GameConfig) -> Result<Report> {
        Ok(stratified_bisim(p, q, env, cfg, cfg.depth)?.into_report())
    }
}

/// Checkers by name.
pub struct CheckerRegistry {
    checkers: BTreeMap<&'static str, Box<dyn EquivalenceChecker>>,
}

impl CheckerRegistry {
    pub fn empty() -> CheckerRegistry {
        CheckerRegistry {
            checkers: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, checker: Box<dyn EquivalenceChecker>) {
        self.checkers.insert(checker.name(), checker);
    }

    pub fn get(&self, name: &str) -> Option<&dyn EquivalenceChecker> {
        self.checkers.get(name).map(|c| c.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.checkers.keys().copied()
    }
}

impl Default for CheckerRegistry {
    fn default() -> Self {
        let mut r = CheckerRegistry::empty();
        r.register(Box::new(Barbed));
        r.register(Box::new(Weak));
        r.register(Box::new(Strata));
        r
    }
}
