use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match aquasi_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            eprintln!("error: usage: {msg} (see --help)");
            return ExitCode::from(2);
        }
    };
    match aquasi_cli::run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::FAILURE
        }
    }
}
