fn main() -> std::process::ExitCode {
    scpl::cli::main()
}
