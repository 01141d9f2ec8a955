mod commands;
mod demos;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use vccts::equivalence::GameConfig;
use vccts::llts::LtsConfig;
use vccts::reduction::Bounds;
use vccts::{eval_expr, parse_expr, Value};

#[derive(Parser)]
#[command(name = "vccts", version, about = "Workbench for value-passing CCS on trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

/// Settings shared by every subcommand.
#[derive(Args, Clone)]
pub struct Options {
    /// Values an input may receive from the environment, comma separated.
    #[arg(long, global = true, default_value = "0,1")]
    universe: String,
    /// Largest multiset size of a multi-labelled step (default: number of locations).
    #[arg(long, global = true)]
    width: Option<usize>,
    /// Search depth; for `bisim --mode strata` the approximant index.
    #[arg(long, visible_alias = "max-depth", global = true)]
    depth: Option<usize>,
    /// Largest number of states (or game positions) explored.
    #[arg(long, global = true, default_value_t = 20_000)]
    max_states: usize,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for randomised runs.
    #[arg(long, global = true, default_value_t = vccts::gen::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Classify every definition and process of each file.
    Check { files: Vec<PathBuf> },
    /// Explore the reduction graph of a process.
    Reduce {
        #[command(flatten)]
        target: Target,
        /// Print a path to an idle state, or else to a stuck or the last found state.
        #[arg(long)]
        trace: bool,
    },
    /// Explore the multi-labelled transition system of a process.
    Lts {
        #[command(flatten)]
        target: Target,
    },
    /// Compare two processes.
    Bisim {
        /// Left process: a file, a process name or a process term.
        p: String,
        /// Right process, as for the left.
        q: String,
        /// Definition files the operands refer to.
        #[arg(short, long = "file")]
        files: Vec<PathBuf>,
        /// Checker: `barbed`, `weak`, or `strata N` (N defaults to --depth).
        #[arg(long, num_args = 1..=2, default_value = "weak")]
        mode: Vec<String>,
        /// On a negative verdict, also build and verify a distinguishing observer.
        #[arg(long)]
        context: bool,
    },
    /// Run a shipped demonstration.
    Demo {
        /// Demo name; omit to list them.
        name: Option<String>,
        /// Messages for the alternating bit protocol, comma separated.
        #[arg(long, default_value = "1,2")]
        messages: String,
        /// Number of random instances for randomised demos.
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
}

#[derive(Args)]
struct Target {
    /// Definition file.
    file: PathBuf,
    /// Process to run (default: the file's last process).
    #[arg(long)]
    process: Option<String>,
}

impl Options {
    fn universe(&self) -> Result<Vec<Value>> {
        let out = match eval_expr(&parse_expr(&format!("[{}]", self.universe))?)? {
            Value::List(items) => items,
            v => bail!("expected a list of values, got {v}"),
        };
        if out.is_empty() {
            bail!("the value universe must not be empty");
        }
        Ok(out)
    }

    fn lts(&self) -> Result<LtsConfig> {
        if self.width == Some(0) {
            bail!("--width must be positive");
        }
        Ok(LtsConfig {
            universe: self.universe()?,
            max_width: self.width,
        })
    }

    fn bounds(&self, default_depth: usize) -> Result<Bounds> {
        if self.max_states == 0 || self.depth == Some(0) {
            bail!("budgets must be positive");
        }
        Ok(Bounds {
            max_states: self.max_states,
            max_depth: self.depth.unwrap_or(default_depth),
        })
    }

    fn game(&self) -> Result<GameConfig> {
        let bounds = self.bounds(GameConfig::default().depth)?;
        Ok(GameConfig {
            lts: self.lts()?,
            max_states: bounds.max_states,
            depth: bounds.max_depth,
            ..GameConfig::default()
        })
    }
}

fn run(cli: Cli) -> Result<i32> {
    let o = &cli.opts;
    match cli.command {
        Command::Check { files } => commands::check(&files, o.json),
        Command::Reduce { target, trace } => commands::reduce(&target.file, target.process.as_deref(), o.bounds(256)?, trace, o.json),
        Command::Lts { target } => commands::lts(&target.file, target.process.as_deref(), &o.lts()?, o.bounds(8)?, o.json),
        Command::Bisim { p, q, files, mode, context } => commands::bisim(&p, &q, &files, &mode, context, &o.game()?, o.json),
        Command::Demo { name, messages, count } => {
            let args = demos::DemoArgs {
                messages,
                count,
                seed: o.seed,
                game: o.game()?,
                bounds: o.bounds(256)?,
            };
            demos::run(name.as_deref(), &args, o.json)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(args: &[&str]) -> Options {
        let mut all = vec!["vccts"];
        all.extend_from_slice(args);
        all.extend_from_slice(&["check"]);
        Cli::parse_from(all).opts
    }

    #[test]
    fn universe_accepts_expressions() {
        let u = opts(&["--universe", "0, 1, (Ack, 2)"]).universe().unwrap();
        assert_eq!(u.len(), 3);
        assert_eq!(u[2].to_string(), "(Ack, 2)");
    }

    #[test]
    fn zero_budgets_are_rejected() {
        assert!(opts(&["--universe", ""]).universe().is_err());
        assert!(opts(&["--width", "0"]).lts().is_err());
        assert!(opts(&["--max-states", "0"]).bounds(1).is_err());
    }

    #[test]
    fn depth_feeds_the_game() {
        assert_eq!(opts(&["--max-depth", "4"]).game().unwrap().depth, 4);
    }
}
