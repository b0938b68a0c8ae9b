use std::process::ExitCode;

fn main() -> ExitCode {
    fracture_field::cli::main()
}
