use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use wsdirac_cli::config::Engine;
use wsdirac_cli::run::Status;
use wsdirac_cli::scenarios::format_listing;
use wsdirac_cli::{list_scenarios, resolve, run_scenario, verify, CliError, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};

#[derive(Parser)]
#[command(
    name = "wsdirac",
    version,
    about = "Dirac dynamics in a modulated Wannier-Stark lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios (file paths or ids from `list`).
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        /// Override the engine selection of every scenario.
        #[arg(long)]
        engine: Option<Engine>,
        /// Output root; each scenario writes to a subdirectory named after it.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Scenarios run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Search these directories instead of the bundled scenarios.
        #[arg(long = "scenario-dir")]
        scenario_dirs: Vec<PathBuf>,
    },
    /// List available scenarios.
    List {
        #[arg(long = "scenario-dir")]
        scenario_dirs: Vec<PathBuf>,
    },
    /// Check that every file listed in a manifest is present and unchanged.
    Verify { manifest: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            configs,
            engine,
            out,
            jobs,
            scenario_dirs,
        } => run(&configs, engine, &out, jobs, &scenario_dirs),
        Command::List { scenario_dirs } => match list_scenarios(&scenario_dirs) {
            Ok(listing) => {
                for w in &listing.warnings {
                    eprintln!("warning: {w}");
                }
                print!("{}", format_listing(&listing));
                EXIT_PASS
            }
            Err(e) => fail(&e),
        },
        Command::Verify { manifest } => match verify(&manifest) {
            Ok(v) => {
                for p in &v.missing {
                    println!("missing\t{}", p.display());
                }
                for p in &v.modified {
                    println!("modified\t{}", p.display());
                }
                if v.ok() {
                    println!("ok\t{} files", v.checked);
                    EXIT_PASS
                } else {
                    EXIT_FAIL
                }
            }
            Err(e) => fail(&e),
        },
    };
    ExitCode::from(code as u8)
}

fn fail(e: &CliError) -> i32 {
    eprintln!("error: {e}");
    EXIT_ERROR
}

fn run(specs: &[String], engine: Option<Engine>, out: &std::path::Path, jobs: usize, dirs: &[PathBuf]) -> i32 {
    let mut configs = Vec::new();
    for s in specs {
        match resolve(s, dirs) {
            Ok(mut c) => {
                if let Some(e) = engine {
                    c.run.engine = e;
                }
                configs.push(c);
            }
            Err(e) => return fail(&e),
        }
    }
    let mut names: Vec<&str> = configs.iter().map(|c| c.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        eprintln!("error: scenario `{}` given twice; outputs would collide", w[0]);
        return EXIT_ERROR;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let results: Vec<_> = pool.install(|| {
        configs
            .par_iter()
            .map(|c| run_scenario(c, &out.join(&c.name)))
            .collect()
    });
    let mut code = EXIT_PASS;
    for (c, r) in configs.iter().zip(results) {
        match r {
            Ok((outcome, _)) => {
                for check in &outcome.checks {
                    let status = match check.status {
                        Status::Pass => "PASS",
                        Status::Fail => "FAIL",
                        Status::Skipped => "SKIP",
                    };
                    let value = check.value.map_or("-".to_string(), |v| format!("{v:.4e}"));
                    println!("{}\t{}\t{value}\t{status}", c.name, check.metric);
                }
                for n in &outcome.notes {
                    println!("{}\tnote\t{n}", c.name);
                }
                let verdict = if outcome.passed() { "PASS" } else { "FAIL" };
                println!("{}\t{verdict}\t{}", c.name, out.join(&c.name).display());
                if !outcome.passed() && code == EXIT_PASS {
                    code = EXIT_FAIL;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                code = EXIT_ERROR;
            }
        }
    }
    code
}
