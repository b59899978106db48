use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use tipshoot_cli::{config, run, Command, Format, Overrides};

/// Topological shooting for tip-growth shape equations.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, overriding `jobs`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Result files to write, overriding `format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIPSHOOT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return usage_exit(e),
    };
    let Some(path) = cli.config else {
        return usage_exit(Cli::command().error(
            ErrorKind::MissingRequiredArgument,
            "--config <PATH> is required",
        ));
    };
    let ov = Overrides {
        out: cli.out,
        jobs: cli.jobs,
        format: cli.format,
    };
    let result = config::load(&path).and_then(|loaded| run(cli.command, &loaded, &ov));
    match result {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("tipshoot: {e}");
            ExitCode::from(1)
        }
    }
}

// Usage errors exit with 1; status 2 is reserved for undetermined results.
fn usage_exit(e: clap::Error) -> ExitCode {
    let _ = e.print();
    if e.use_stderr() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
