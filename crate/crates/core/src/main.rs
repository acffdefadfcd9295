use std::process::ExitCode;

fn main() -> ExitCode {
    dslad::cli::main()
}
