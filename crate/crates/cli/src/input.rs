use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use vccts::{flatten, parse_process, parse_program, DefEnv, Error, NetState, ProcTerm, Program};

/// Definition files read together as one program.
pub struct Sources {
    pub files: Vec<(PathBuf, String)>,
}

impl Sources {
    pub fn read(paths: &[PathBuf]) -> Result<Sources> {
        let mut files = Vec::new();
        for p in paths {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            files.push((p.clone(), text));
        }
        Ok(Sources { files })
    }

    /// Parses the concatenation, reporting errors against the right file.
    pub fn program(&self) -> Result<Program> {
        let mut joined = String::new();
        let mut starts = Vec::new();
        for (path, text) in &self.files {
            starts.push((joined.lines().count(), path));
            joined.push_str(text);
            if !joined.ends_with('\n') {
                joined.push('\n');
            }
        }
        parse_program(&joined).map_err(|e| locate(e, &starts))
    }
}

fn locate(e: Error, starts: &[(usize, &PathBuf)]) -> anyhow::Error {
    match e {
        Error::Parse { line, column, message } => {
            let (offset, path) = starts.iter().rev().find(|(s, _)| *s < line).copied().unwrap_or((0, starts[0].1));
            anyhow!("{}:{}:{}: {message}", path.display(), line - offset, column)
        }
        e => e.into(),
    }
}

pub fn parse_file(path: &Path) -> Result<Program> {
    Sources::read(&[path.to_path_buf()])?.program()
}

/// The last named process of a program.
pub fn main_process(prog: &Program, origin: &str) -> Result<ProcTerm> {
    match prog.processes.last() {
        Some((_, p)) => Ok(p.clone()),
        None => bail!("{origin} declares no `process`"),
    }
}

fn is_known(spec: &str, prog: &Program) -> bool {
    prog.processes.iter().any(|(n, _)| n == spec) || prog.env.contains(spec)
}

/// Resolves an operand: a definition file (its last process) or a process
/// or constant name.
pub fn operand(spec: &str, prog: &Program) -> Result<ProcTerm> {
    let path = Path::new(spec);
    if path.is_file() {
        return main_process(&parse_file(path)?, spec);
    }
    if is_known(spec, prog) {
        return Ok(prog.process(spec)?);
    }
    parse_process(spec, &prog.env).with_context(|| format!("`{spec}` is neither a file, a known process, nor a process term"))
}

/// Loads `files` together with any operand files, and reads operands that
/// are neither files nor known names as inline process terms.
pub fn operands(files: &[PathBuf], specs: &[&str]) -> Result<(Program, Vec<ProcTerm>)> {
    let mut paths = files.to_vec();
    for spec in specs {
        let path = PathBuf::from(spec);
        if path.is_file() && !paths.contains(&path) {
            paths.push(path);
        }
    }
    let mut sources = Sources::read(&paths)?;
    let base = sources.program()?;
    let mut names = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        if Path::new(spec).is_file() || is_known(spec, &base) {
            names.push(spec.to_string());
        } else {
            let name = format!("Operand_{i}");
            sources.files.push((PathBuf::from(format!("<operand {}>", i + 1)), format!("process {name} =\n{spec};\n")));
            names.push(name);
        }
    }
    let prog = sources.program()?;
    let terms = names.iter().map(|n| operand(n, &prog)).collect::<Result<_>>()?;
    Ok((prog, terms))
}

pub fn state(term: &ProcTerm, env: &DefEnv) -> Result<NetState> {
    Ok(flatten(term, env)?)
}
