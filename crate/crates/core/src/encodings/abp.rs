//! The alternating bit protocol: a transmitter `P1`, a receiver `P2` and an
//! auxiliary loop `A` that absorbs the transmitter's resend signals.

use crate::error::{Error, Result};
use crate::expr::Value;
use crate::parser::parse_program;
use crate::reduction::{explore, Bounds, StateSpace};
use crate::state::{flatten, NetState};
use crate::syntax::{DefEnv, ProcTerm};

/// Protocol definitions. The receiver acknowledges the end marker before
/// reporting success, so the transmitter can terminate.
pub const ABP_SOURCE: &str = r#"
symbol send/1;
symbol ack/1;
symbol f/1;

def P1(t1, b) =
  if null(t1)
  then 'send((End, b)).(ack(x).(if x = (Ack, b) then 0 else 'f(0).(P1(t1, b))))
  else 'send((head(t1), b)).(ack(x).(
         if x = (Ack, b) then 'f(0).(P1(tail(t1), not(b)))
         else 'f(0).(P1(t1, b))));

def P2(t2, b) =
  send(x).(
    if snd(x) = b
    then (if fst(x) = End
          then 'ack((Ack, b)).(Succ(t2))
          else 'ack((Ack, b)).(P2(append(t2, fst(x)), not(b))))
    else 'ack((Ack, not(b))).(P2(t2, b)));

def A = f(x).(A);

def Succ(t) = *;
"#;

/// The receiver's end branch without the final acknowledgement. The
/// transmitter then waits on `ack` forever.
pub const ABP_SOURCE_UNACKED_END: &str = r#"
symbol send/1;
symbol ack/1;
symbol f/1;

def P1(t1, b) =
  if null(t1)
  then 'send((End, b)).(ack(x).(if x = (Ack, b) then 0 else 'f(0).(P1(t1, b))))
  else 'send((head(t1), b)).(ack(x).(
         if x = (Ack, b) then 'f(0).(P1(tail(t1), not(b)))
         else 'f(0).(P1(t1, b))));

def P2(t2, b) =
  send(x).(
    if snd(x) = b
    then (if fst(x) = End
          then Succ(t2)
          else 'ack((Ack, b)).(P2(append(t2, fst(x)), not(b))))
    else 'ack((Ack, not(b))).(P2(t2, b)));

def A = f(x).(A);

def Succ(t) = *;
"#;

fn list(t: &[Value]) -> String {
    Value::List(t.to_vec()).to_string()
}

/// `((A | P1(t, b)) | P2([], b))` with the protocol environment.
pub fn abp_system(t: &[Value], b: i64) -> Result<(DefEnv, NetState)> {
    abp_system_from(ABP_SOURCE, t, b)
}

pub fn abp_system_from(source: &str, t: &[Value], b: i64) -> Result<(DefEnv, NetState)> {
    if !(0..=1).contains(&b) {
        return Err(Error::Encoding(format!("the alternating bit must be 0 or 1, got {b}")));
    }
    let src = format!("{source}\nprocess Init = (A | P1({}, {b})) | P2([], {b});", list(t));
    let prog = parse_program(&src)?;
    let state = flatten(&prog.process("Init")?, &prog.env)?;
    Ok((prog.env, state))
}

/// Whether the non-idle components are exactly `A`, `0` and `Succ(t)`.
pub fn is_success_state(state: &NetState, t: &[Value]) -> bool {
    let mut found: Vec<String> = state
        .comp
        .values()
        .filter(|c| **c != ProcTerm::Idle)
        .map(|c| c.to_string())
        .collect();
    found.sort();
    let mut want = vec!["0".to_string(), "A".to_string(), format!("Succ({})", list(t))];
    want.sort();
    found == want
}

/// Lists carried by `P1(…)` occurrences and by `P2(…)`/`Succ(…)` occurrences.
fn carried_lists(state: &NetState) -> (Vec<Vec<Value>>, Vec<Vec<Value>>) {
    let mut sent = Vec::new();
    let mut received = Vec::new();
    for c in state.comp.values() {
        c.visit(&mut |t| {
            if let ProcTerm::Const { name, args, .. } = t {
                let Some(crate::expr::Expr::Lit(Value::List(items))) = args.first() else { return };
                match name.as_str() {
                    "P1" => sent.push(items.clone()),
                    "P2" | "Succ" => received.push(items.clone()),
                    _ => {}
                }
            }
        });
    }
    (sent, received)
}

/// Received prefix followed by some pending suffix of the transmitter
/// gives back the original list.
pub fn abp_invariant(state: &NetState, t: &[Value]) -> bool {
    let (sent, received) = carried_lists(state);
    if received.iter().any(|r| !t.starts_with(r)) || sent.iter().any(|s| !t.ends_with(s)) {
        return false;
    }
    match (sent.is_empty(), received.is_empty()) {
        (false, false) => sent.iter().any(|s| received.iter().any(|r| r.len() + s.len() == t.len())),
        (true, false) => received.iter().any(|r| r == t),
        _ => true,
    }
}

/// Searches for the success state from `state`.
pub fn search_success(state: &NetState, env: &DefEnv, t: &[Value], bounds: Bounds) -> Result<(StateSpace, Option<usize>)> {
    explore(state, env, bounds, |s| Ok(is_success_state(s, t)))
}

/// Whether `A`, `0` and `Succ(t)` all occur among the components, with
/// anything else allowed beside them.
pub fn includes_success(state: &NetState, t: &[Value]) -> bool {
    let found: Vec<String> = state.comp.values().map(|c| c.to_string()).collect();
    let mut need = vec!["0".to_string(), "A".to_string(), format!("Succ({})", list(t))];
    for f in &found {
        if let Some(i) = need.iter().position(|n| n == f) {
            need.swap_remove(i);
        }
    }
    need.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{reachable, Status};
    use crate::syntax::check_canonical;

    fn ints(v: &[i64]) -> Vec<Value> {
        v.iter().map(|&n| Value::Int(n)).collect()
    }

    #[test]
    fn definitions_are_canonical() {
        let prog = parse_program(ABP_SOURCE).unwrap();
        for (name, def) in prog.env.definitions() {
            let c = check_canonical(&def.body, &prog.env).unwrap();
            assert!(c.is_canonical(), "{name}: {c:?}");
        }
    }

    #[test]
    fn messages_arrive_in_order() {
        for t in [ints(&[]), ints(&[1]), ints(&[1, 2])] {
            let (env, s) = abp_system(&t, 0).unwrap();
            let (space, hit) = search_success(&s, &env, &t, Bounds::default()).unwrap();
            assert!(hit.is_some(), "no success state for {t:?}");
            assert!(space.states.iter().all(|s| abp_invariant(s, &t)));
        }
    }

    #[test]
    fn full_space_keeps_the_invariant() {
        let t = ints(&[1, 2]);
        let (env, s) = abp_system(&t, 1).unwrap();
        let space = reachable(&s, &env, Bounds::default()).unwrap();
        assert_eq!(space.status, Status::Complete);
        assert!(space.states.iter().all(|st| abp_invariant(st, &t)));
        assert!(space.states.iter().any(|st| is_success_state(st, &t)));
    }

    #[test]
    fn unacknowledged_end_leaves_the_transmitter_waiting() {
        let t = ints(&[1]);
        let (env, s) = abp_system_from(ABP_SOURCE_UNACKED_END, &t, 0).unwrap();
        let (_, hit) = search_success(&s, &env, &t, Bounds::default()).unwrap();
        assert!(hit.is_none());
    }

    #[test]
    fn an_unconnected_neighbour_does_not_interfere() {
        let t = ints(&[1]);
        let (env, s) = abp_system(&t, 0).unwrap();
        let q = flatten(&crate::parser::parse_process("'send((End, 0)).(*) | ack(x).(*)", &env).unwrap(), &env).unwrap();
        let both = s.oplus(&q, &env).unwrap();
        let (_, hit) = explore(&both, &env, Bounds::default(), |s| Ok(includes_success(s, &t))).unwrap();
        assert!(hit.is_some());
    }

    #[test]
    fn bit_must_be_binary() {
        assert!(abp_system(&[], 2).is_err());
    }
}
