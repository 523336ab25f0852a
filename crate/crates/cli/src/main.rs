use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(adbid_cli::run(std::env::args_os()))
}
