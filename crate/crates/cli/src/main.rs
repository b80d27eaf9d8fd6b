//! `aubrykit` command-line front end.
//!
//! Exit codes: 0 success, 2 scenario error (nothing written), 3 numerical
//! failure (only `diagnostic.json` written).

mod artifacts;
mod commands;
mod scenario;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use artifacts::Artifacts;
use commands::CommandError;
use scenario::{Overrides, Scenario, ScenarioFile};

const EXIT_SCENARIO: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "aubrykit", version, about = "Minimizers, Aubry-Mather sets and ghost circles of lattice recurrence relations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Global minimizer of the periodic action.
    Minimize(Common),
    /// Catalog of critical points with Morse indices.
    CriticalPoints(Common),
    /// Gradient flow from a linear start, with a CSV trace.
    Flow(Common),
    /// Periodic ghost circle and its T-map.
    GhostCircle(Common),
    /// Aubry-Mather set, gaps and the oscillation criterion.
    AubryMather(Common),
    /// Non-minimizing stationary solutions inside gaps.
    GapSolution(Common),
    /// Orbits of the standard map.
    StandardMap(Common),
    /// Invariant suites on built-in scenarios.
    Verify(Common),
    /// Ghost circles along convergents of a rotation target.
    GhostLimit(Common),
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// TOML scenario file; flags override its keys.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// fk, free or custom.
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    k: Option<f64>,
    /// Period matrix, e.g. "2" or "2,0;0,2".
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    /// Rotation target, e.g. "golden", "0.3" or "2/5".
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    convergents: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    quick: bool,
}

impl Command {
    fn split(self) -> (&'static str, Common) {
        match self {
            Command::Minimize(c) => ("minimize", c),
            Command::CriticalPoints(c) => ("critical-points", c),
            Command::Flow(c) => ("flow", c),
            Command::GhostCircle(c) => ("ghost-circle", c),
            Command::AubryMather(c) => ("aubry-mather", c),
            Command::GapSolution(c) => ("gap-solution", c),
            Command::StandardMap(c) => ("standard-map", c),
            Command::Verify(c) => ("verify", c),
            Command::GhostLimit(c) => ("ghost-limit", c),
        }
    }
}

fn resolve(name: &str, c: Common) -> Result<Scenario, scenario::ScenarioError> {
    let file = match &c.scenario {
        Some(path) => ScenarioFile::load(path)?,
        None => ScenarioFile::default(),
    };
    let o = Overrides {
        potential: c.potential,
        k: c.k,
        p: c.p,
        q: c.q,
        omega: c.omega,
        convergents: c.convergents,
        seed: c.seed,
        out: c.out,
        tol: c.tol,
        quick: c.quick,
    };
    let s = Scenario::resolve(name, file, o)?;
    commands::validate(&s)?;
    Ok(s)
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("AUBRYKIT_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or(format!("AUBRYKIT_THREADS={v:?} is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_SCENARIO);
    }
    let (name, common) = cli.command.split();
    let scenario = match resolve(name, common) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SCENARIO);
        }
    };
    let mut art = Artifacts::new(&scenario);
    match commands::run(&scenario, &mut art) {
        Ok(()) => match art.write(&scenario.out) {
            Ok(paths) => {
                for p in paths {
                    println!("{}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: writing artifacts: {e}");
                ExitCode::from(EXIT_NUMERICAL)
            }
        },
        Err(CommandError::Scenario(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(CommandError::Numerical { message, detail }) => {
            eprintln!("numerical failure: {message}");
            match art.write_diagnostic(&scenario.out, &message, detail) {
                Ok(p) => eprintln!("diagnostic: {}", p.display()),
                Err(e) => eprintln!("error: writing diagnostic: {e}"),
            }
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
