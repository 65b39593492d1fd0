use std::process::ExitCode;

use clap::Parser;
use heavycov_cli::args::{resolve, Cli};
use heavycov_cli::runner::run;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.command.args().threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = resolve(&cli.command).and_then(|(cfg, out)| run(&cfg, &out));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
