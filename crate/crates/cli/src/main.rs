use std::process::ExitCode;

fn main() -> ExitCode {
    migsim::cli::main()
}
