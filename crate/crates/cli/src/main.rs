use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pedrisk_cli::run(std::env::args().collect()))
}
