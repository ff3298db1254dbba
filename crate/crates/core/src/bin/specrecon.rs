use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use specrecon::cli::{parse_with_overrides, run_experiment, Command};
use specrecon::Error;

/// Run a spectrum reconstruction experiment and write its artifacts.
#[derive(Parser, Debug)]
#[command(name = "specrecon", version)]
struct Args {
    /// simulate, reconstruct, validate, scaling, mp-compare or insert.
    command: String,
    /// TOML config file; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set p=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<bool, Error> {
    let command: Command = args.command.parse()?;
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_with_overrides(&text, &args.set)?;
    cfg.command = command;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    let outcome = run_experiment(&cfg)?;
    for f in &outcome.files {
        println!("{}  {}", f.sha256, outcome.output_dir.join(&f.path).display());
    }
    println!("{}", outcome.output_dir.join("manifest.json").display());
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("specrecon: validation checks failed, see summary.json");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("specrecon: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
