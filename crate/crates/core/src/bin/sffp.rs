use std::process::ExitCode;

fn main() -> ExitCode {
    sffp::cli::run(std::env::args_os())
}
