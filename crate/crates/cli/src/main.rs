use std::process::ExitCode;

use cbp_mde_cli::{run, Cli, CliError};
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::EstimationImpossible { reason, message } = &e {
                let doc = serde_json::json!({
                    "error": "estimation_impossible",
                    "reason": reason,
                    "message": message,
                });
                eprintln!("{doc}");
            } else {
                eprintln!("cbp-mde: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
