use anyhow::{anyhow, Result};
use serde_json::{json, Value as Json};
use vccts::encodings::abp::{abp_invariant, abp_system_from, search_success};
use vccts::equivalence::{distinguishing_context, weak_barbed_bisim, weak_bisim, GameConfig};
use vccts::gen::{gen_automaton, gen_recognized_tree, rng, GenConfig};
use vccts::reduction::{reduces_to_idle, Bounds, Status};
use vccts::{flatten, parse_program, ProcTerm, Value};

use crate::commands::emit;

pub const ABP: &str = include_str!("../demos/abp.vccts");
pub const TREE_AUTOMATON: &str = include_str!("../demos/tree_automaton.vccts");
pub const EXPANSION_LAW: &str = include_str!("../demos/expansion_law.vccts");

pub struct DemoArgs {
    pub messages: String,
    pub count: usize,
    pub seed: u64,
    pub game: GameConfig,
    pub bounds: Bounds,
}

pub struct Outcome {
    pub text: String,
    pub json: Json,
    /// 0 when the demo reproduced its expected result.
    pub code: i32,
}

pub trait Demo {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn source(&self) -> &'static str;
    fn run(&self, args: &DemoArgs) -> Result<Outcome>;
}

pub struct DemoRegistry {
    demos: Vec<Box<dyn Demo>>,
}

impl DemoRegistry {
    pub fn get(&self, name: &str) -> Option<&dyn Demo> {
        self.demos.iter().find(|d| d.name() == name).map(|d| d.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Demo> {
        self.demos.iter().map(|d| d.as_ref())
    }
}

impl Default for DemoRegistry {
    fn default() -> Self {
        DemoRegistry {
            demos: vec![Box::new(Abp), Box::new(TreeAutomatonDemo), Box::new(ExpansionLaw)],
        }
    }
}

pub fn run(name: Option<&str>, args: &DemoArgs, as_json: bool) -> Result<i32> {
    let registry = DemoRegistry::default();
    let Some(name) = name else {
        let list: String = registry.iter().map(|d| format!("{:<16} {}\n", d.name(), d.description())).collect();
        emit(false, &Json::Null, &list);
        return Ok(0);
    };
    let demo = registry.get(name).ok_or_else(|| {
        let names: Vec<_> = registry.iter().map(|d| d.name()).collect();
        anyhow!("unknown demo `{name}`; expected one of {}", names.join(", "))
    })?;
    let out = demo.run(args)?;
    emit(as_json, &out.json, &out.text);
    Ok(out.code)
}

fn messages(list: &str) -> Result<Vec<Value>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map(Value::Int).map_err(|_| anyhow!("messages are integers, got `{s}`")))
        .collect()
}

struct Abp;

impl Demo for Abp {
    fn name(&self) -> &'static str {
        "abp"
    }

    fn description(&self) -> &'static str {
        "alternating bit protocol delivering --messages in order"
    }

    fn source(&self) -> &'static str {
        ABP
    }

    fn run(&self, args: &DemoArgs) -> Result<Outcome> {
        let t = messages(&args.messages)?;
        let (env, s) = abp_system_from(self.source(), &t, 0)?;
        let (space, hit) = search_success(&s, &env, &t, args.bounds)?;
        let invariant = space.states.iter().all(|st| abp_invariant(st, &t));
        let list = Value::List(t.clone());
        let mut text = format!("messages {list}, {} states explored, invariant {}\n", space.len(), if invariant { "holds" } else { "broken" });
        let mut trace = Vec::new();
        let code = match hit {
            Some(i) => {
                text.push_str(&format!("  0: {}\n", space.states[0]));
                for (redex, j) in space.trace_to(i) {
                    text.push_str(&format!("  -- {redex}\n  {j}: {}\n", space.states[j]));
                    trace.push(json!({ "redex": redex, "state": space.states[j].to_string() }));
                }
                text.push_str(&format!("reached Succ({list})\n"));
                if invariant {
                    0
                } else {
                    1
                }
            }
            None if space.status == Status::Truncated => {
                text.push_str("no success state within the budget\n");
                2
            }
            None => {
                text.push_str("success is unreachable\n");
                1
            }
        };
        Ok(Outcome {
            json: json!({
                "messages": t,
                "explored": space.len(),
                "status": space.status,
                "invariant": invariant,
                "reached": hit.is_some(),
                "trace": trace,
            }),
            text,
            code,
        })
    }
}

struct TreeAutomatonDemo;

impl Demo for TreeAutomatonDemo {
    fn name(&self) -> &'static str {
        "tree-automaton"
    }

    fn description(&self) -> &'static str {
        "encoded automata accept recognised trees, and one tree they should not"
    }

    fn source(&self) -> &'static str {
        TREE_AUTOMATON
    }

    fn run(&self, args: &DemoArgs) -> Result<Outcome> {
        let prog = parse_program(self.source())?;
        let aut = prog.automaton("Aut").ok_or_else(|| anyhow!("demo source lacks `Aut`"))?;
        let t = prog.tree("t").ok_or_else(|| anyhow!("demo source lacks `t`"))?;
        let root = &aut.states[0];
        let recognised = aut.recognizes(root, t);
        let (env, enc) = aut.to_process(root)?;
        let sys = flatten(&ProcTerm::par(enc, t.to_process(&Value::Int(1))), &env)?;
        let idle = reduces_to_idle(&sys, &env, args.bounds)?;
        let mut text = format!("tree {t} at {root}: recognised {recognised}, encoding reaches idle {}\n", idle.reached);
        text.push_str(&format!("  0: {}\n", sys.canonical(&env)?.state));
        for (redex, st) in &idle.witness {
            text.push_str(&format!("  -- {redex}\n     {st}\n"));
        }
        let counterexample = idle.reached && !recognised;

        let cfg = GenConfig::default();
        let mut r = rng(args.seed);
        let (mut tried, mut accepted, mut attempts) = (0, 0, 0);
        while tried < args.count && attempts < args.count * 20 {
            attempts += 1;
            let a = gen_automaton(&mut r, &cfg, 4);
            let Some(tree) = gen_recognized_tree(&mut r, &a, "Q0", 3) else { continue };
            let (env, enc) = a.to_process("Q0")?;
            let sys = flatten(&ProcTerm::par(enc, tree.to_process(&Value::Int(1))), &env)?;
            tried += 1;
            if reduces_to_idle(&sys, &env, args.bounds)?.reached {
                accepted += 1;
            }
        }
        text.push_str(&format!("random recognised trees (seed {}): {accepted} of {tried} reach idle\n", args.seed));
        Ok(Outcome {
            json: json!({
                "tree": t.to_string(),
                "recognized": recognised,
                "reaches_idle": idle.reached,
                "witness": idle.witness.iter().map(|(r, s)| json!({ "redex": r, "state": s.to_string() })).collect::<Vec<_>>(),
                "random": { "seed": args.seed, "instances": tried, "reach_idle": accepted },
            }),
            text,
            code: if counterexample && accepted == tried { 0 } else { 1 },
        })
    }
}

struct ExpansionLaw;

impl Demo for ExpansionLaw {
    fn name(&self) -> &'static str {
        "expansion-law"
    }

    fn description(&self) -> &'static str {
        "parallel outputs on two locations differ from their interleaving"
    }

    fn source(&self) -> &'static str {
        EXPANSION_LAW
    }

    fn run(&self, args: &DemoArgs) -> Result<Outcome> {
        let prog = parse_program(self.source())?;
        let env = &prog.env;
        let lhs = flatten(&prog.process("Lhs")?, env)?;
        let rhs = flatten(&prog.process("Rhs")?, env)?;
        let weak = weak_bisim(&lhs, &rhs, env, &args.game)?;
        let barbed = weak_barbed_bisim(&lhs, &rhs, env, &args.game)?;
        let ctx = distinguishing_context(&lhs, &rhs, env, &args.game, args.game.depth.max(1))?;
        let text = format!(
            "{lhs}\n  vs\n{rhs}\nweak: {}\nbarbed: {}\nobserver ({}): {}\n  verified: {}\n",
            weak.verdict,
            barbed.verdict,
            ctx.case,
            ctx.context,
            ctx.verified
        );
        let ok = weak.verdict.is_not() && barbed.verdict.is_not() && ctx.verified;
        Ok(Outcome {
            json: json!({ "weak": weak, "barbed": barbed, "context": ctx }),
            text,
            code: if ok { 0 } else { 1 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique() {
        let r = DemoRegistry::default();
        let mut names: Vec<_> = r.iter().map(|d| d.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names, ["abp", "expansion-law", "tree-automaton"]);
    }

    #[test]
    fn shipped_sources_parse() {
        for d in DemoRegistry::default().iter() {
            parse_program(d.source()).unwrap_or_else(|e| panic!("{}: {e}", d.name()));
        }
    }

    #[test]
    fn message_lists() {
        assert_eq!(messages(" 1, 2 ").unwrap(), vec![Value::Int(1), Value::Int(2)]);
        assert!(messages("").unwrap().is_empty());
        assert!(messages("x").is_err());
    }
}
