//! Acceptance gate: one PASS/FAIL line per criterion, with its time limit.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use vccts::encodings::abp::{abp_system, includes_success, is_success_state};
use vccts::encodings::automata::{SigmaTree, Transition, TreeAutomaton};
use vccts::equivalence::{distinguishing_context, stratified_bisim, weak_barbed_bisim, weak_bisim, GameConfig, Verdict};
use vccts::gen::{gen_automaton, gen_pair, gen_recognized_tree, gen_state, rng, signature_env, GenConfig};
use vccts::llts::{diamond_check, multi_transitions, LabelMultiset, LtsConfig};
use vccts::reduction::{explore, internal_steps, reachable, reduces_to_idle, Bounds, Status};
use vccts::syntax::Polarity;
use vccts::{flatten, parse_program, DefEnv, LocGraph, NetState, ProcTerm, Symbol, Value};

type Outcome = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn load(src: &str, names: &[&str]) -> (DefEnv, Vec<NetState>) {
    let prog = parse_program(src).expect("source parses");
    let states = names
        .iter()
        .map(|n| flatten(&prog.process(n).expect("process exists"), &prog.env).expect("flattens"))
        .collect();
    (prog.env, states)
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const EX5: &str = "process L = 'f(1).(0) | 'g(2).(0);\nprocess R = 'f(1).('g(2).(0)) + 'g(2).('f(1).(0));";

fn barbs_example() -> Outcome {
    let (env, s) = load("symbol f/2; symbol g/2; process P = 'f(3).(*, *) | 'g(4).(*, *);", &["P"]);
    let p = &s[0];
    let alphabet: Vec<Symbol> = ["f", "g"]
        .iter()
        .flat_map(|n| [Symbol::new(n, 2, Polarity::Plain), Symbol::new(n, 2, Polarity::Co)])
        .collect();
    let mut holds = BTreeSet::new();
    for mask in 0u32..(1 << alphabet.len()) {
        let b: BTreeSet<Symbol> = (0..alphabet.len()).filter(|k| mask & (1 << k) != 0).map(|k| alphabet[k].clone()).collect();
        if p.has_barb(&b, &env).map_err(|e| e.to_string())? {
            holds.insert(b.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        }
    }
    let expected: BTreeSet<Vec<String>> = [vec![], vec!["'f"], vec!["'g"], vec!["'f", "'g"]]
        .into_iter()
        .map(|v| v.into_iter().map(String::from).collect())
        .collect();
    ensure(holds == expected, format!("barb sets {holds:?}"))?;
    Ok(format!("{} of 16 barb sets hold", holds.len()))
}

fn local_connections() -> Outcome {
    let (env, s) = load(
        "def A1 = 'f(5).(A1); def A2 = f(x).(A2); def A3 = f(x).(A3);\nprocess S = (A1 | A2) <+> A3;",
        &["S"],
    );
    let s = &s[0];
    let key = s.canonical_key().map_err(|e| e.to_string())?;
    let steps = internal_steps(s, &env).map_err(|e| e.to_string())?;
    ensure(
        steps.iter().any(|t| t.target.canonical_key().ok().as_ref() == Some(&key)),
        "no tau self-loop",
    )?;
    let loc_of = |name: &str| s.comp.iter().find(|(_, t)| t.to_string() == name).map(|(l, _)| *l).unwrap();
    let (l1, l3) = (loc_of("A1"), loc_of("A3"));
    ensure(
        steps.iter().all(|t| {
            let pair = BTreeSet::from([t.fired.p, t.fired.q]);
            pair != BTreeSet::from([l1, l3])
        }),
        "tau between A1 and A3",
    )?;
    let space = reachable(s, &env, Bounds::default()).map_err(|e| e.to_string())?;
    ensure(space.len() == 1 && space.status == Status::Complete, format!("{} states, {:?}", space.len(), space.status))?;
    Ok(format!("{} tau step(s), 1 reachable state, complete", steps.len()))
}

fn multi_labelled() -> Outcome {
    let src = "symbol f1/1; symbol g1/1; symbol f2/2; symbol g2/2;\n\
        process P = graph { a: f1(x).('g1(x).(*)); b: f2(y).(*, *); c: 'f1(1).(*); d: 'f2(2).(*, *); \
        edges { a -- c, b -- d } };\n\
        process Want = graph { v1: 'g1(1).(*); v6: *; v7: *; v3: *; v8: *; v9: *; \
        edges { v1 -- v3, v6 -- v8, v6 -- v9, v7 -- v8, v7 -- v9 } };";
    let (env, s) = load(src, &["P", "Want"]);
    let multi = multi_transitions(&s[0], &env, &LtsConfig::default()).map_err(|e| e.to_string())?;
    let tt: Vec<_> = multi.steps.iter().filter(|m| m.labels == LabelMultiset::taus(2)).collect();
    ensure(tt.len() == 1, format!("{} {{tau,tau}} steps", tt.len()))?;
    let got = &tt[0].target;
    ensure(got.len() == 6 && got.graph.edge_count() == 5, format!("target {got}"))?;
    let want = s[1].canonical_key().map_err(|e| e.to_string())?;
    ensure(got.canonical_key().map_err(|e| e.to_string())? == want, format!("target {got} not isomorphic to the expected one"))?;
    // Residual: both g1-carrying and idle children map back to their parents.
    let parents: BTreeSet<_> = tt[0].residual.values().copied().collect();
    ensure(parents.len() == 4, "residual does not cover the four participants")?;
    Ok(format!("{{tau,tau}} target {got}"))
}

fn diamond() -> Outcome {
    let cfg = GenConfig::default();
    let env = signature_env(&cfg);
    let lts = LtsConfig::default();
    let mut r = rng(0xd1a);
    let (mut states, mut checked) = (0, 0);
    while states < 200 {
        let s = gen_state(&mut r, &cfg, &env).map_err(|e| e.to_string())?;
        let report = diamond_check(&s, &env, &lts).map_err(|e| e.to_string())?;
        if !report.passed() {
            return Err(format!("{s}: {}", report.counterexamples.join("; ")));
        }
        checked += report.checked;
        states += 1;
    }
    ensure(checked > 0, "no multi-step of size two or more was generated")?;
    Ok(format!("{states} processes, {checked} sequentialisations, 0 counterexamples"))
}

fn expansion_law() -> Outcome {
    let (env, s) = load(EX5, &["L", "R"]);
    let cfg = GameConfig::default();
    let weak = weak_bisim(&s[0], &s[1], &env, &cfg).map_err(|e| e.to_string())?;
    let w = weak.verdict.witness().ok_or(format!("weak: {}", weak.verdict))?;
    let m = w.multiset.as_ref().ok_or("weak witness without a multiset")?;
    ensure(m.size() == 2 && m.is_visible_only(), format!("weak witness {m}"))?;
    let barbed = weak_barbed_bisim(&s[0], &s[1], &env, &cfg).map_err(|e| e.to_string())?;
    let b = barbed.verdict.witness().and_then(|w| w.barb.clone()).ok_or(format!("barbed: {}", barbed.verdict))?;
    let names: Vec<String> = b.iter().map(|s| s.to_string()).collect();
    ensure(names == ["'f", "'g"], format!("barb witness {names:?}"))?;
    Ok(format!("weak witness {m}, barb witness {{{}}}", names.join(", ")))
}

fn idle_padding() -> Outcome {
    let cfg = GenConfig {
        max_components: 3,
        ..GenConfig::default()
    };
    let env = signature_env(&cfg);
    let game = GameConfig::default();
    let mut r = rng(0x1d1e);
    let idle = flatten(&ProcTerm::Idle, &env).map_err(|e| e.to_string())?;
    let mut done = 0;
    while done < 50 {
        let p = gen_state(&mut r, &cfg, &env).map_err(|e| e.to_string())?;
        let locs: Vec<_> = p.locations().collect();
        let star = idle.locations().next().unwrap();
        let cross: Vec<_> = locs.iter().filter(|_| rand::Rng::gen_bool(&mut r, 0.5)).map(|&l| (l, star)).collect();
        let (q, _) = p.compose(&idle, &cross, &env).map_err(|e| e.to_string())?;
        let w = weak_bisim(&p, &q, &env, &game).map_err(|e| e.to_string())?;
        let b = weak_barbed_bisim(&p, &q, &env, &game).map_err(|e| e.to_string())?;
        ensure(w.verdict.is_bisimilar(), format!("weak on {p} vs {q}: {}", w.verdict))?;
        ensure(b.verdict.is_bisimilar(), format!("barbed on {p} vs {q}: {}", b.verdict))?;
        done += 1;
    }
    Ok(format!("{done} processes, all bisimilar under both checkers"))
}

struct PairResult {
    weak: Verdict,
    barbed: Verdict,
    strata: Option<bool>,
}

fn sample_pairs(count: usize, seed: u64) -> Result<Vec<PairResult>, String> {
    let cfg = GenConfig {
        max_components: 2,
        max_depth: 2,
        ..GenConfig::default()
    };
    let env = signature_env(&cfg);
    let game = GameConfig {
        max_states: 5_000,
        ..GameConfig::default()
    };
    let mut r = rng(seed);
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < count * 4 {
        attempts += 1;
        let (p, q) = gen_pair(&mut r, &cfg, &env).map_err(|e| e.to_string())?;
        let weak = weak_bisim(&p, &q, &env, &game).map_err(|e| e.to_string())?;
        if matches!(weak.verdict, Verdict::Inconclusive { .. }) {
            continue;
        }
        let barbed = weak_barbed_bisim(&p, &q, &env, &game).map_err(|e| e.to_string())?.verdict;
        // Approximants on a finite game stabilise within its number of triples.
        let depth = weak.explored + 1;
        let strata = stratified_bisim(&p, &q, &env, &game, depth).map_err(|e| e.to_string())?;
        let stable = (!strata.truncated).then(|| *strata.verdicts.last().unwrap());
        out.push(PairResult {
            weak: weak.verdict,
            barbed,
            strata: stable,
        });
    }
    Ok(out)
}

fn approximants_agree() -> Outcome {
    let pairs = sample_pairs(40, 0x1e4)?;
    let decided: Vec<_> = pairs.iter().filter(|p| p.strata.is_some()).collect();
    ensure(decided.len() >= 30, format!("only {} conclusive pairs", decided.len()))?;
    let mut split = (0, 0);
    for p in &decided {
        let s = p.strata.unwrap();
        ensure(s == p.weak.is_bisimilar(), format!("strata {s} vs fixpoint {}", p.weak))?;
        if s {
            split.0 += 1;
        } else {
            split.1 += 1;
        }
    }
    Ok(format!("{} pairs agree ({} bisimilar, {} not)", decided.len(), split.0, split.1))
}

fn soundness() -> Outcome {
    let pairs = sample_pairs(40, 0x7e4)?;
    let mut bisimilar = 0;
    for p in &pairs {
        if p.weak.is_bisimilar() {
            bisimilar += 1;
            ensure(p.barbed.is_bisimilar(), format!("weak bisimilar but barbed says {}", p.barbed))?;
        }
    }
    ensure(bisimilar > 0, "no weakly bisimilar pair sampled")?;
    Ok(format!("{} pairs, {bisimilar} weakly bisimilar, 0 violations", pairs.len()))
}

fn tree_automata() -> Outcome {
    let cfg = GenConfig::default();
    let mut r = rng(0xa07);
    let bounds = Bounds::default();
    let mut done = 0;
    let mut attempts = 0;
    while done < 100 && attempts < 2_000 {
        attempts += 1;
        let aut = gen_automaton(&mut r, &cfg, 4);
        let Some(t) = gen_recognized_tree(&mut r, &aut, "Q0", 3) else { continue };
        ensure(aut.recognizes("Q0", &t), "generator produced an unrecognised tree")?;
        let (env, root) = aut.to_process("Q0").map_err(|e| e.to_string())?;
        let sys = flatten(&ProcTerm::par(root, t.to_process(&Value::Int(1))), &env).map_err(|e| e.to_string())?;
        let res = reduces_to_idle(&sys, &env, bounds).map_err(|e| e.to_string())?;
        ensure(res.reached, format!("{t} recognised but {sys} does not reach idle ({:?})", res.status))?;
        done += 1;
    }
    ensure(done >= 100, format!("only {done} recognised instances"))?;

    let tr = |from: &str, symbol: &str, targets: &[&str]| Transition {
        from: from.into(),
        symbol: symbol.into(),
        targets: targets.iter().map(|s| s.to_string()).collect(),
    };
    let aut = TreeAutomaton::new(
        "A",
        ["Q", "Q1", "Q2", "Q11", "Q12", "Q21", "Q22"].iter().map(|s| s.to_string()).collect(),
        vec![tr("Q", "f", &["Q1", "Q2"]), tr("Q1", "g1", &["Q11", "Q12"]), tr("Q2", "g2", &["Q21", "Q22"])],
    )
    .map_err(|e| e.to_string())?;
    let leaf = SigmaTree::Leaf;
    let t = SigmaTree::node(
        "f",
        vec![SigmaTree::node("g1", vec![SigmaTree::node("g2", vec![leaf.clone(), leaf.clone()]), leaf.clone()]), leaf],
    );
    let (env, root) = aut.to_process("Q").map_err(|e| e.to_string())?;
    let enc = vccts::state::cs_head(&root, &env).map_err(|e| e.to_string())?;
    ensure(enc.summands.len() == 1, "encoding of Q should have one summand")?;
    let proc_t = t.to_process(&Value::Int(1));
    ensure(
        proc_t.to_string() == "'f(1).('g1(1).('g2(1).(*, *), *), *)",
        format!("proc(t) = {proc_t}"),
    )?;
    let sys = flatten(&ProcTerm::par(root, proc_t), &env).map_err(|e| e.to_string())?;
    let idle = reduces_to_idle(&sys, &env, bounds).map_err(|e| e.to_string())?;
    ensure(idle.reached, "counterexample does not reach idle")?;
    ensure(!aut.recognizes("Q", &t), "counterexample tree is recognised")?;
    Ok(format!("{done} recognised instances reach idle; counterexample reaches idle in {} steps and is not recognised", idle.witness.len()))
}

fn alternating_bit() -> Outcome {
    let mut summary = Vec::new();
    for t in [vec![], vec![1], vec![1, 2], vec![1, 2, 3]] {
        let t: Vec<Value> = t.into_iter().map(Value::Int).collect();
        let (env, s) = abp_system(&t, 0).map_err(|e| e.to_string())?;
        let space = reachable(&s, &env, Bounds::default()).map_err(|e| e.to_string())?;
        ensure(space.status == Status::Complete, "ABP state space truncated")?;
        ensure(space.states.iter().any(|st| is_success_state(st, &t)), format!("no success state for {t:?}"))?;
        let inert = flatten(
            &vccts::parse_process("'send((End, 0)).(*) <+> ack(x).(*)", &env).map_err(|e| e.to_string())?,
            &env,
        )
        .map_err(|e| e.to_string())?;
        let both = s.oplus(&inert, &env).map_err(|e| e.to_string())?;
        let (_, hit) = explore(&both, &env, Bounds::default(), |st| Ok(includes_success(st, &t))).map_err(|e| e.to_string())?;
        ensure(hit.is_some(), format!("success lost beside an inert neighbour for {t:?}"))?;
        summary.push(format!("{}:{}", Value::List(t.clone()), space.len()));
    }
    Ok(format!("success reached for all lists (states: {})", summary.join(" ")))
}

fn completeness_contexts() -> Outcome {
    let cfg = GameConfig::default();
    let (env, s) = load(EX5, &["L", "R"]);
    let a = distinguishing_context(&s[0], &s[1], &env, &cfg, 3).map_err(|e| e.to_string())?;
    ensure(a.verified, format!("expansion-law context failed: {:?}", a.failures))?;
    let (env, s) = load("symbol f/1; process P = 'f(7).(*); process Q = *;", &["P", "Q"]);
    let b = distinguishing_context(&s[0], &s[1], &env, &cfg, 3).map_err(|e| e.to_string())?;
    ensure(b.verified, format!("single-output context failed: {:?}", b.failures))?;
    ensure(b.case == "single output", format!("case {}", b.case))?;
    Ok(format!(
        "{} context checked against {} derivative(s); {} context against {}",
        a.case, a.checked, b.case, b.checked
    ))
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion { id: 1, name: "barbs of a two-location output pair", limit: Duration::from_secs(1), run: barbs_example },
        Criterion { id: 2, name: "local connections", limit: Duration::from_secs(1), run: local_connections },
        Criterion { id: 3, name: "multi-labelled {tau,tau} step", limit: Duration::from_secs(1), run: multi_labelled },
        Criterion { id: 4, name: "diamond property on 200 processes", limit: Duration::from_secs(60), run: diamond },
        Criterion { id: 5, name: "expansion law fails", limit: Duration::from_secs(5), run: expansion_law },
        Criterion { id: 6, name: "idle padding is invisible", limit: Duration::from_secs(60), run: idle_padding },
        Criterion { id: 7, name: "approximants reach the fixpoint", limit: Duration::from_secs(120), run: approximants_agree },
        Criterion { id: 8, name: "weak bisimilarity implies barbed", limit: Duration::from_secs(120), run: soundness },
        Criterion { id: 9, name: "tree automata recognition", limit: Duration::from_secs(60), run: tree_automata },
        Criterion { id: 10, name: "alternating bit protocol", limit: Duration::from_secs(60), run: alternating_bit },
        Criterion { id: 11, name: "distinguishing contexts", limit: Duration::from_secs(120), run: completeness_contexts },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; exceeded the time limit")),
            Err(e) => (false, e),
        };
        println!(
            "{} {:>2} {} [{:.2}s / {}s] {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            took.as_secs_f64(),
            c.limit.as_secs(),
            detail
        );
        if !ok {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn graph_oracle_for_the_expected_target() {
    // Independent check that the expected target of the {tau,tau} step has
    // exactly the stated cross edges.
    let g = LocGraph::from_edges([1, 6, 7, 3, 8, 9], [(1, 3), (6, 8), (6, 9), (7, 8), (7, 9)]).unwrap();
    assert_eq!(g.edge_count(), 5);
    assert!(!g.adjacent(1, 6));
}
