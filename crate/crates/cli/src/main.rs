use std::io;
use std::process::ExitCode;

use amdd_cli::{run, Cli, Io};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut out, mut err) = (io::stdout(), io::stderr());
    let code = run(&cli, &mut Io { out: &mut out, err: &mut err });
    ExitCode::from(code as u8)
}
