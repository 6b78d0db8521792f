fn main() -> std::process::ExitCode {
    bohm_twotime::cli::main()
}
