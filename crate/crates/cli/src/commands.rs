use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use serde_json::{json, Value as Json};
use vccts::equivalence::{distinguishing_context, CheckerRegistry, GameConfig};
use vccts::llts::{multi_transitions, LtsConfig};
use vccts::reduction::{reachable, Bounds, Status};
use vccts::{check_canonical, NetState, Program};

use crate::input::{main_process, operand, operands, parse_file, state};

/// Writes a report; a closed stdout (say, piped into `head`) is not an error.
pub fn emit(json: bool, value: &Json, text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = if json {
        writeln!(out, "{}", serde_json::to_string_pretty(value).expect("reports serialise"))
    } else {
        write!(out, "{text}")
    };
}

pub fn check(files: &[PathBuf], as_json: bool) -> Result<i32> {
    let mut code = 0;
    let mut report = Vec::new();
    let mut text = String::new();
    for f in files {
        let prog = parse_file(f)?;
        let defs: HashMap<_, _> = prog.env.definitions().collect();
        let mut items = Vec::new();
        let named = prog
            .definitions
            .iter()
            .filter_map(|n| defs.get(n).map(|d| ("def", n.as_str(), &d.body)))
            .chain(prog.processes.iter().map(|(n, p)| ("process", n.as_str(), p)));
        for (kind, name, body) in named {
            let class = check_canonical(body, &prog.env)?;
            if !class.is_canonical() {
                code = 1;
            }
            text.push_str(&format!("{}: {kind} {name}: {class}\n", f.display()));
            items.push(json!({ "kind": kind, "name": name, "classification": class }));
        }
        report.push(json!({ "file": f.display().to_string(), "items": items }));
    }
    emit(as_json, &json!(report), &text);
    Ok(code)
}

fn target(prog: &Program, file: &Path, process: Option<&str>) -> Result<NetState> {
    let term = match process {
        Some(name) => operand(name, prog)?,
        None => main_process(prog, &file.display().to_string())?,
    };
    state(&term, &prog.env)
}

fn status_code(s: Status) -> i32 {
    match s {
        Status::Complete => 0,
        Status::Truncated => 2,
    }
}

pub fn reduce(file: &Path, process: Option<&str>, bounds: Bounds, trace: bool, as_json: bool) -> Result<i32> {
    let prog = parse_file(file)?;
    let env = &prog.env;
    let s = target(&prog, file, process)?;
    let space = reachable(&s, env, bounds)?;
    let mut idle = None;
    for (i, st) in space.states.iter().enumerate() {
        if st.is_idle(env)? {
            idle = Some(i);
            break;
        }
    }
    let stuck: Vec<usize> = (0..space.len()).filter(|&i| space.succ[i].is_empty()).collect();
    let edges: usize = space.succ.iter().map(Vec::len).sum();
    let goal = idle.or(stuck.first().copied()).unwrap_or(space.len() - 1);
    let path = space.trace_to(goal);

    let mut text = format!(
        "states: {} ({})\ntransitions: {edges}\nidle reachable: {}\nstuck states: {}\n",
        space.len(),
        status_word(space.status),
        idle.map_or("no".to_string(), |i| format!("yes, state {i}")),
        stuck.len()
    );
    if trace {
        text.push_str(&format!("trace to state {goal}:\n  0: {}\n", space.states[0]));
        for (redex, j) in &path {
            text.push_str(&format!("  -- {redex}\n  {j}: {}\n", space.states[*j]));
        }
    }
    let states: Vec<Json> = space
        .states
        .iter()
        .enumerate()
        .map(|(i, st)| json!({ "id": i, "depth": space.depth[i], "text": st.to_string(), "state": st.to_json() }))
        .collect();
    let transitions: Vec<Json> = space
        .succ
        .iter()
        .enumerate()
        .flat_map(|(i, out)| out.iter().map(move |(j, r)| json!({ "from": i, "to": j, "redex": r })))
        .collect();
    let mut value = json!({
        "status": space.status,
        "states": states,
        "transitions": transitions,
        "idle": idle,
        "stuck": stuck,
    });
    if trace {
        value["trace"] = json!(path.iter().map(|(r, j)| json!({ "redex": r, "to": j })).collect::<Vec<_>>());
    }
    emit(as_json, &value, &text);
    Ok(status_code(space.status))
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Complete => "complete",
        Status::Truncated => "truncated",
    }
}

pub fn lts(file: &Path, process: Option<&str>, cfg: &LtsConfig, bounds: Bounds, as_json: bool) -> Result<i32> {
    let prog = parse_file(file)?;
    let env = &prog.env;
    let root = target(&prog, file, process)?.canonical(env)?;
    let mut states = vec![root.state];
    let mut depth = vec![0];
    let mut index = HashMap::from([(root.key, 0usize)]);
    let mut transitions = Vec::new();
    let mut status = Status::Complete;
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        if depth[i] >= bounds.max_depth {
            status = Status::Truncated;
            continue;
        }
        let steps = multi_transitions(&states[i], env, cfg)?;
        if steps.status == Status::Truncated {
            status = Status::Truncated;
        }
        for step in steps.steps {
            let c = step.target.canonical(env)?;
            let j = match index.get(&c.key) {
                Some(&j) => j,
                None if states.len() >= bounds.max_states => {
                    status = Status::Truncated;
                    continue;
                }
                None => {
                    index.insert(c.key, states.len());
                    states.push(c.state);
                    depth.push(depth[i] + 1);
                    queue.push_back(states.len() - 1);
                    states.len() - 1
                }
            };
            let residual: BTreeMap<_, _> = step.residual.iter().map(|(to, from)| (c.relabel[to], *from)).collect();
            transitions.push((i, j, step.labels, residual, step.matched));
        }
    }

    let mut text = format!("states: {} ({})\ntransitions: {}\n", states.len(), status_word(status), transitions.len());
    for (i, st) in states.iter().enumerate() {
        text.push_str(&format!("  {i}: {st}\n"));
    }
    for (i, j, labels, residual, _) in &transitions {
        let res: Vec<String> = residual.iter().map(|(a, b)| format!("{a}->{b}")).collect();
        text.push_str(&format!("  {i} --{labels}--> {j}  residual {{{}}}\n", res.join(", ")));
    }
    let value = json!({
        "status": status,
        "states": states.iter().enumerate().map(|(i, s)| json!({ "id": i, "text": s.to_string(), "state": s.to_json() })).collect::<Vec<_>>(),
        "transitions": transitions.iter().map(|(i, j, labels, residual, matched)| json!({
            "from": i,
            "to": j,
            "labels": labels,
            "text": labels.to_string(),
            "residual": residual,
            "matched": matched,
        })).collect::<Vec<_>>(),
    });
    emit(as_json, &value, &text);
    Ok(status_code(status))
}

pub fn bisim(p: &str, q: &str, files: &[PathBuf], mode: &[String], context: bool, cfg: &GameConfig, as_json: bool) -> Result<i32> {
    let (prog, terms) = operands(files, &[p, q])?;
    let env = &prog.env;
    let left = state(&terms[0], env)?;
    let right = state(&terms[1], env)?;

    let mut cfg = cfg.clone();
    let name = mode.first().map(String::as_str).unwrap_or("weak");
    if let Some(n) = mode.get(1) {
        if name != "strata" {
            bail!("only `strata` takes a depth");
        }
        cfg.depth = n.parse().map_err(|_| anyhow!("strata depth must be a number, got `{n}`"))?;
    }
    let registry = CheckerRegistry::default();
    let checker = registry
        .get(name)
        .ok_or_else(|| anyhow!("unknown mode `{name}`; expected one of {}", registry.names().collect::<Vec<_>>().join(", ")))?;
    let report = checker.check(&left, &right, env, &cfg)?;

    let mut text = format!("{}: {}\nexplored: {}\n", report.checker, report.verdict, report.explored);
    if let Some(strata) = &report.strata {
        let row: Vec<&str> = strata.iter().map(|b| if *b { "yes" } else { "no" }).collect();
        text.push_str(&format!("approximants 0..{}: {}\n", strata.len() - 1, row.join(" ")));
    }
    for w in &report.warnings {
        text.push_str(&format!("warning: {w}\n"));
    }
    let mut value = json!({ "report": report });
    if context && report.verdict.is_not() {
        let c = distinguishing_context(&left, &right, env, &cfg, cfg.depth.max(1))?;
        text.push_str(&format!(
            "observer ({}, depth {}): {}\n  verified against {} derivative(s): {}\n",
            c.case,
            c.depth,
            c.context,
            c.checked,
            if c.verified { "yes" } else { "no" }
        ));
        for (name, def) in c.env.definitions().filter(|(n, _)| !env.contains(n)) {
            text.push_str(&format!("  where {name} = {}\n", def.body));
        }
        for f in &c.failures {
            text.push_str(&format!("  failure: {f}\n"));
        }
        value["context"] = json!(c);
    }
    emit(as_json, &value, &text);
    Ok(report.verdict.exit_code())
}
