use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(depcap_cli::cli::run(std::env::args_os()))
}
