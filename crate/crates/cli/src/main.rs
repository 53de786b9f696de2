use std::process::ExitCode;

use clap::Parser;
use gram_spectra_cli::args::Cli;
use gram_spectra_cli::{run, CliError};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let (config, options) = cli.resolve()?;
    if cli.global.print_config {
        println!("{}", config.to_json());
        return Ok(0);
    }
    let rendered = run(&config, &options)?;
    let target = config
        .output_path
        .as_ref()
        .map_or("stdout".to_string(), |p| p.display().to_string());
    eprintln!("{} -> {target}", rendered.summary);
    match rendered.numerical_failure {
        Some(msg) => {
            let e = CliError::Numerical(msg);
            eprintln!("error: {e}");
            Ok(e.exit_code())
        }
        None => Ok(0),
    }
}
