fn main() -> std::process::ExitCode {
    pamir_cli::main_entry()
}
