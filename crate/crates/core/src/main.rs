fn main() -> std::process::ExitCode {
    nldirac::cli::main()
}
