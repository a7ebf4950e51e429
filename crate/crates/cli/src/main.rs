//! `privehd` experiment driver.
//!
//! Exit codes: 0 success, 1 usage, 2 io, 3 config, 4 contract violation.

mod commands;
mod config;
mod error;
mod output;

use clap::Parser;

use crate::config::{config_file_args, Cli, RunConfig};
use crate::error::CliError;
use crate::output::Sink;

fn parse(args: Vec<String>) -> Result<Cli, CliError> {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    let Some(path) = cli.command.parts().1.config.clone() else { return Ok(cli) };
    // file values go first so that flags on the command line win
    let mut merged = args[..2].to_vec();
    merged.extend(config_file_args(&path)?);
    merged.extend_from_slice(&args[2..]);
    Cli::try_parse_from(&merged)
        .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.render().to_string().trim_end())))
}

fn run() -> Result<(), CliError> {
    let cli = parse(std::env::args().collect())?;
    let (name, opts) = cli.command.parts();
    let cfg = RunConfig::resolve(name, opts)?;
    let mut sink = Sink::open(cfg.log.as_ref(), cfg.csv.as_ref())?;
    sink.config(&cfg)?;
    commands::run(&cfg, &mut sink)?;
    sink.finish()
}

fn main() {
    if let Err(e) = run() {
        eprintln!("privehd: {}", e.to_string().trim_end());
        std::process::exit(e.exit_code());
    }
}
