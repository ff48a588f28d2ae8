use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(endow_opt::cli::run())
}
