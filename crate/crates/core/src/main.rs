fn main() -> std::process::ExitCode {
    segrc::cli::main()
}
