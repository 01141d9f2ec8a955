use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::seq::SliceRandom;

use vccts::equivalence::{stratified_bisim, weak_barbed_bisim, weak_bisim, GameConfig, Verdict};
use vccts::gen::{gen_pair, gen_process, gen_state, rng, signature_env, GenConfig};
use vccts::llts::{multi_transitions, single_transitions, LtsConfig};
use vccts::reduction::internal_steps;
use vccts::{flatten, parse_process, DefEnv, NetState};

fn small() -> GenConfig {
    GenConfig {
        max_components: 3,
        ..GenConfig::default()
    }
}

fn state(seed: u64, cfg: &GenConfig, env: &DefEnv) -> NetState {
    gen_state(&mut rng(seed), cfg, env).unwrap()
}

fn kind(v: &Verdict) -> u8 {
    match v {
        Verdict::Bisimilar => 0,
        Verdict::Not { .. } => 1,
        Verdict::Inconclusive { .. } => 2,
    }
}

fn check_graph(s: &NetState) -> Result<(), TestCaseError> {
    let verts: BTreeSet<_> = s.graph.vertices().collect();
    let keys: BTreeSet<_> = s.comp.keys().copied().collect();
    prop_assert_eq!(&verts, &keys);
    for (a, b) in s.graph.edges() {
        prop_assert!(a != b, "self loop at {}", a);
        prop_assert!(verts.contains(&a) && verts.contains(&b));
        prop_assert!(s.graph.adjacent(b, a));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reductions_keep_graphs_well_formed(seed in any::<u64>()) {
        let cfg = GenConfig::default();
        let env = signature_env(&cfg);
        let s = state(seed, &cfg, &env);
        check_graph(&s)?;
        for step in internal_steps(&s, &env).unwrap() {
            check_graph(&step.target)?;
            let targets: BTreeSet<_> = step.target.locations().collect();
            let sources: BTreeSet<_> = s.locations().collect();
            for (to, from) in &step.residual {
                prop_assert!(targets.contains(to));
                prop_assert!(sources.contains(from));
            }
            prop_assert!(!step.target.comp.contains_key(&step.fired.p));
            prop_assert!(!step.target.comp.contains_key(&step.fired.q));
        }
    }

    #[test]
    fn canonical_key_ignores_location_names(seed in any::<u64>(), shuffle in any::<u64>()) {
        let cfg = GenConfig::default();
        let env = signature_env(&cfg);
        let s = state(seed, &cfg, &env);
        let locs: Vec<_> = s.locations().collect();
        let mut fresh: Vec<u32> = (0..locs.len() as u32).map(|i| 100 + 3 * i).collect();
        fresh.shuffle(&mut rng(shuffle));
        let map: BTreeMap<_, _> = locs.iter().copied().zip(fresh).collect();
        let comp = s.comp.iter().map(|(l, t)| (map[l], t.clone())).collect();
        let moved = NetState::from_parts(s.graph.relabel(&map), comp, s.restricted.clone(), &env).unwrap();
        prop_assert_eq!(s.canonical_key().unwrap(), moved.canonical_key().unwrap());
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let cfg = GenConfig::default();
        let env = signature_env(&cfg);
        let s = state(seed, &cfg, &env);
        let back = NetState::from_json(&s.to_json(), &env).unwrap();
        prop_assert_eq!(s.canonical_key().unwrap(), back.canonical_key().unwrap());
    }

    #[test]
    fn printed_processes_parse_back(seed in any::<u64>()) {
        let cfg = GenConfig::default();
        let env = signature_env(&cfg);
        let p = gen_process(&mut rng(seed), &cfg);
        let q = parse_process(&p.to_string(), &env).unwrap();
        prop_assert_eq!(
            flatten(&p, &env).unwrap().canonical_key().unwrap(),
            flatten(&q, &env).unwrap().canonical_key().unwrap()
        );
    }

    #[test]
    fn width_one_is_the_single_step_relation(seed in any::<u64>()) {
        let cfg = GenConfig::default();
        let env = signature_env(&cfg);
        let s = state(seed, &cfg, &env);
        let lts = LtsConfig { max_width: Some(1), ..LtsConfig::default() };
        let key = |labels: String, t: &NetState| (labels, t.canonical_key().unwrap());
        let single: BTreeSet<_> = single_transitions(&s, &env, &lts).unwrap()
            .iter().map(|m| key(m.labels.to_string(), &m.target)).collect();
        let multi: BTreeSet<_> = multi_transitions(&s, &env, &lts).unwrap().steps
            .iter().map(|m| key(m.labels.to_string(), &m.target)).collect();
        prop_assert_eq!(single, multi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verdicts_are_symmetric(seed in any::<u64>()) {
        let cfg = small();
        let env = signature_env(&cfg);
        let (p, q) = gen_pair(&mut rng(seed), &cfg, &env).unwrap();
        let game = GameConfig::default();
        let pq = weak_bisim(&p, &q, &env, &game).unwrap().verdict;
        let qp = weak_bisim(&q, &p, &env, &game).unwrap().verdict;
        prop_assert_eq!(kind(&pq), kind(&qp));
        let pq = weak_barbed_bisim(&p, &q, &env, &game).unwrap().verdict;
        let qp = weak_barbed_bisim(&q, &p, &env, &game).unwrap().verdict;
        prop_assert_eq!(kind(&pq), kind(&qp));
    }

    #[test]
    fn approximants_only_shrink(seed in any::<u64>()) {
        let cfg = small();
        let env = signature_env(&cfg);
        let (p, q) = gen_pair(&mut rng(seed), &cfg, &env).unwrap();
        let r = stratified_bisim(&p, &q, &env, &GameConfig::default(), 6).unwrap();
        prop_assert!(r.verdicts.windows(2).all(|w| w[0] || !w[1]), "{:?}", r.verdicts);
        if let Some(d) = r.separating_depth() {
            prop_assert!(!r.verdicts[d] && r.verdicts[..d].iter().all(|v| *v));
        }
    }

    #[test]
    fn every_process_is_bisimilar_to_itself(seed in any::<u64>()) {
        let cfg = small();
        let env = signature_env(&cfg);
        let p = state(seed, &cfg, &env);
        let game = GameConfig::default();
        prop_assert!(!weak_bisim(&p, &p, &env, &game).unwrap().verdict.is_not());
        prop_assert!(!weak_barbed_bisim(&p, &p, &env, &game).unwrap().verdict.is_not());
    }
}
