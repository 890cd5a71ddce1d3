use std::process::ExitCode;

fn main() -> ExitCode {
    mcie_cli::run_argv(std::env::args_os())
}
