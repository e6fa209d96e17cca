use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(votewire::cli::run(std::env::args()) as u8)
}
