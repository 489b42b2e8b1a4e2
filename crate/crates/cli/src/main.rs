use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use qcl_core::acceptance::{self, Options, CRITERIA};
use qcl_core::clebsch::{enumerate_class_solutions, regular_solution, variable_count};
use qcl_core::scenario::{self, Scenario, Verdict};

mod bundled;

#[derive(Parser)]
#[command(name = "qcl", version, about = "Classical ensembles, quasi-quantal projection and Schrödinger dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name) and write its report.
    Run {
        scenario: String,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    ListScenarios {
        /// Print the scenario JSON of the named entry instead.
        #[arg(long)]
        show: Option<String>,
    },
    /// Class solutions (k, m) of n - k = 2m + 1 for N = 1..=K particles.
    ClebschTable {
        #[arg(long, default_value_t = 3)]
        n_max: u32,
        /// Include the maximal-redundancy solution m = 0.
        #[arg(long)]
        include_maximal: bool,
    },
    /// Run the acceptance suite and print a criterion table.
    Verify {
        /// Print the criteria without running them.
        #[arg(long)]
        list: bool,
        /// Caustic threshold on the characteristic Jacobian.
        #[arg(long)]
        eps_j: Option<f64>,
        /// Monte Carlo sample count for the Liouville criterion.
        #[arg(long)]
        samples: Option<usize>,
        /// Criterion ids to run (default: all).
        ids: Vec<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { scenario, out } => run(&scenario, out),
        Command::ListScenarios { show: None } => {
            for b in bundled::ALL {
                let s = b.parse()?;
                let tiers: Vec<_> = s.tiers.iter().map(|t| t.name()).collect();
                println!("{:<22} [{}] {}", s.name, tiers.join(","), s.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListScenarios { show: Some(name) } => {
            let b = bundled::find(&name).with_context(|| unknown_bundled(&name))?;
            print!("{}", b.json);
            Ok(ExitCode::SUCCESS)
        }
        Command::ClebschTable { n_max, include_maximal } => {
            if n_max == 0 {
                bail!("--n-max must be at least 1");
            }
            println!("{:>4} {:>4} {:>4} {:>4} {:>6} {:>10}  flags", "N", "n", "k", "m", "class", "variables");
            for n in 1..=n_max {
                let regular = regular_solution(n)?;
                for s in enumerate_class_solutions(n, include_maximal)? {
                    let mut flags = Vec::new();
                    if s == regular {
                        flags.push("regular");
                    }
                    if s.maximal_redundancy {
                        flags.push("maximal");
                    }
                    println!(
                        "{:>4} {:>4} {:>4} {:>4} {:>6} {:>10}  {}",
                        s.particles,
                        s.n,
                        s.k,
                        s.m,
                        s.class(),
                        variable_count(&s),
                        flags.join(",")
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { list, eps_j, samples, ids } => verify(list, eps_j, samples, ids),
    }
}

fn unknown_bundled(name: &str) -> String {
    let names: Vec<_> = bundled::ALL.iter().map(|b| b.name).collect();
    format!("no bundled scenario {name:?}; available: {}", names.join(", "))
}

fn load(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        return scenario::load_scenario(path).with_context(|| format!("loading {arg}"));
    }
    match bundled::find(arg) {
        Some(b) => Ok(b.parse()?),
        None => bail!("{arg} is neither a file nor a bundled scenario ({})", unknown_bundled(arg)),
    }
}

fn run(arg: &str, out: Option<PathBuf>) -> Result<ExitCode> {
    let s = load(arg)?;
    let report = scenario::run(&s)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&s.name));
    let written = scenario::write_outputs(&report, &dir)?;

    println!("scenario {}", s.name);
    for c in &report.checks {
        let verdict = match c.verdict {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Error => "ERROR",
        };
        let measured = c.measured.map_or("-".to_string(), |m| format!("{m:.3e}"));
        println!("  {verdict:<5} {:<22} {measured:>10} (tol {:.1e})  {}", c.kind, c.tolerance, c.detail);
    }
    for e in &report.execution_errors {
        println!("  error in {}: {}", e.tier, e.message);
    }
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn verify(list: bool, eps_j: Option<f64>, samples: Option<usize>, ids: Vec<u8>) -> Result<ExitCode> {
    if list {
        for c in CRITERIA {
            println!("{:>2}  {:<26} tolerance {}", c.id, c.title, c.tolerance);
        }
        return Ok(ExitCode::SUCCESS);
    }
    let mut options = Options::default();
    if let Some(e) = eps_j {
        options.caustic_threshold = e;
    }
    if let Some(n) = samples {
        options.monte_carlo_samples = n;
    }
    let ids: Vec<u8> = if ids.is_empty() { CRITERIA.iter().map(|c| c.id).collect() } else { ids };
    let mut outcomes = Vec::new();
    for id in ids {
        outcomes.push(acceptance::run(id, &options)?);
    }
    print!("{}", acceptance::format_table(&outcomes));
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
