use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaplab::experiment::{catalog, find_entry, run, ExperimentConfig, RunOptions};
use gaplab::Error;

#[derive(Parser)]
#[command(
    name = "gaplab",
    version,
    about = "Band gaps and eigenvalue counting for periodic strips"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Floquet band structure and Dirichlet/Neumann enclosure.
    Bands(RunArgs),
    /// Gap condition and unperturbed supercell counts.
    Gaps(RunArgs),
    /// Eigenvalue branches of a perturbed supercell and their crossings.
    Sweep(RunArgs),
    /// Crossing count against the block bounds.
    Thm1(RunArgs),
    /// Counting function of a rectangle against the Weyl term.
    Weyl(RunArgs),
    /// Lowest eigenvalue of a block with a growing hole.
    Shrink(RunArgs),
    /// Thin-strip expansion defect.
    Asymptotics(RunArgs),
    /// List the bundled configs.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Config file, or the name of a bundled config.
    #[arg(long)]
    config: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Multiplies every mesh resolution in the config.
    #[arg(long, default_value_t = 1.0)]
    resolution_scale: f64,
}

fn load(spec: &str) -> Result<ExperimentConfig, Error> {
    let path = Path::new(spec);
    if path.exists() {
        return ExperimentConfig::load(path);
    }
    match find_entry(spec) {
        Some(entry) => entry.config(),
        None => Err(Error::Config(format!(
            "no config file or bundled config named {spec:?}"
        ))),
    }
}

fn execute(subcommand: &str, args: &RunArgs) -> Result<bool, (Error, Option<(PathBuf, String)>)> {
    let config = load(&args.config).map_err(|e| (e, None))?;
    if config.kind.subcommand() != subcommand {
        return Err((
            Error::Config(format!(
                "config describes a {:?} experiment; run it with `gaplab {}`",
                config.kind,
                config.kind.subcommand()
            )),
            None,
        ));
    }
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| (Error::Config(e.to_string()), None))?;
    }
    std::fs::create_dir_all(&args.out).map_err(|e| (e.into(), None))?;
    let report_path = args.out.join(format!("{}.json", config.stem()));
    let opts = RunOptions {
        resolution_scale: args.resolution_scale,
    };
    let outcome = run(&config, &opts)
        .map_err(|e| (e, Some((report_path.clone(), config.description.clone()))))?;
    for artifact in &outcome.artifacts {
        std::fs::write(args.out.join(&artifact.name), &artifact.contents)
            .map_err(|e| (e.into(), None))?;
    }
    for check in &outcome.checks {
        println!(
            "{} {}: {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::List => {
            for entry in catalog() {
                println!(
                    "{:<24} {:<12} {}",
                    entry.name,
                    entry.config().map(|c| c.kind.subcommand()).unwrap_or("?"),
                    entry.summary
                );
            }
            return ExitCode::SUCCESS;
        }
        Command::Bands(a) => ("bands", a),
        Command::Gaps(a) => ("gaps", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Thm1(a) => ("thm1", a),
        Command::Weyl(a) => ("weyl", a),
        Command::Shrink(a) => ("shrink", a),
        Command::Asymptotics(a) => ("asymptotics", a),
    };
    match execute(name, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((err, report)) => {
            eprintln!("error [{}]: {err}", err.name());
            if let Some((path, description)) = report {
                let body = serde_json::json!({
                    "description": description,
                    "pass": false,
                    "error": err.name(),
                    "message": err.to_string(),
                });
                let _ = std::fs::write(
                    path,
                    serde_json::to_string_pretty(&body).unwrap_or_default(),
                );
            }
            if err.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
