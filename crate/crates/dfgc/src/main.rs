use std::process::ExitCode;

fn main() -> ExitCode {
    dfgc::cli::main()
}
