use std::io;
use std::process::ExitCode;

use clap::Parser;
use infernet_cli::{dispatch, Cli, Io};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let mut out = io::stdout().lock();
    let mut err = io::stderr();
    let mut io = Io {
        input: &mut input,
        out: &mut out,
        err: &mut err,
    };
    match dispatch(cli, &mut io) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
