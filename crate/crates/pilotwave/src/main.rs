use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pilotwave::cli::run() as u8)
}
