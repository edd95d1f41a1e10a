fn main() -> std::process::ExitCode {
    ghostcolor::cli::main()
}
