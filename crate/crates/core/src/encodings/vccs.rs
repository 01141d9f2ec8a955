//! Value-passing CCS as the fragment with unary symbols and complete
//! communication graphs.

use crate::error::{Error, Result};
use crate::state::{flatten, NetState};
use crate::syntax::{DefEnv, ProcTerm};

/// `(S₁ | ⋯ | Sₙ) \ I` over the complete graph on the components.
pub fn vccs_compose(components: Vec<ProcTerm>, restriction: &[&str], env: &DefEnv) -> Result<NetState> {
    if components.is_empty() {
        return Err(Error::Encoding("a composition needs at least one component".into()));
    }
    let mut seen = Vec::new();
    for c in &components {
        c.visit(&mut |t| match t {
            ProcTerm::Input {
                symbol, children, ..
            }
            | ProcTerm::Output {
                symbol, children, ..
            } if children.len() != 1 => seen.push(symbol.clone()),
            _ => {}
        });
    }
    for (name, arity) in env.symbols() {
        if *arity != 1 && components.iter().any(|c| c.written_symbols().contains(name)) {
            seen.push(name.clone());
        }
    }
    if let Some(f) = seen.first() {
        return Err(Error::Encoding(format!("symbol `{f}` is not unary")));
    }
    let term = ProcTerm::complete(components);
    let term = if restriction.is_empty() {
        term
    } else {
        ProcTerm::restrict(term, restriction)
    };
    flatten(&term, env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_process, parse_program};

    fn env() -> DefEnv {
        parse_program("symbol f/1; symbol g/1; symbol h/2;").unwrap().env
    }

    fn terms(src: &[&str], env: &DefEnv) -> Vec<ProcTerm> {
        src.iter().map(|s| parse_process(s, env).unwrap()).collect()
    }

    #[test]
    fn complete_graphs() {
        let env = env();
        let two = vccs_compose(terms(&["'f(1).(0)", "'g(2).(0)"], &env), &[], &env).unwrap();
        assert_eq!((two.len(), two.graph.edge_count()), (2, 1));
        let one = vccs_compose(terms(&["'f(1).(0)"], &env), &[], &env).unwrap();
        assert_eq!((one.len(), one.graph.edge_count()), (1, 0));
        let three = vccs_compose(terms(&["'f(1).(0)", "f(x).(0)", "*"], &env), &["f"], &env).unwrap();
        assert_eq!((three.len(), three.graph.edge_count()), (3, 3));
        assert_eq!(three.restricted.len(), 1);
    }

    #[test]
    fn binary_symbols_are_rejected() {
        let env = env();
        let err = vccs_compose(terms(&["'h(1).(0, 0)"], &env), &[], &env).unwrap_err();
        assert!(err.to_string().contains("not unary"));
    }
}
