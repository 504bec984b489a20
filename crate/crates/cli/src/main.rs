use std::process::ExitCode;

fn main() -> ExitCode {
    aada_cli::cli_run(std::env::args_os())
}
