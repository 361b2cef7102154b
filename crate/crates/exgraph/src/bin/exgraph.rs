use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(exgraph::cli::run(std::env::args_os()))
}
