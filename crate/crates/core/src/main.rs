use std::process::ExitCode;

fn main() -> ExitCode {
    sgbseg::cli::run(std::env::args_os())
}
