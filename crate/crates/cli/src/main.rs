use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ssam_cli::execute(std::env::args_os()))
}
