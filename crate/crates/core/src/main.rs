use std::process::ExitCode;

fn main() -> ExitCode {
    distinct::cli::main()
}
