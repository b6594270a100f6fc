mod cli;
mod commands;
mod failure;
mod output;
mod settings;

use std::process::ExitCode;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::failure::{CliResult, Failure};

fn run(cli: &Cli) -> CliResult<()> {
    let file = cli.config.as_deref().map(settings::read_config_file).transpose()?;
    let file = file.as_ref();
    match &cli.command {
        Command::Train(a) => commands::train(a, file),
        Command::Eval(a) => commands::eval(a, file),
        Command::AuditVariance(a) => commands::audit_variance(a, file),
        Command::SampleTasks(a) => commands::sample_tasks(a, file),
        Command::ExportPlot(a) => commands::export_plot(a, file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // Help and version requests.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", Failure::usage(first.trim_start_matches("error: ")));
            return ExitCode::from(failure::ExitClass::Usage.code());
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.class.code())
        }
    }
}
