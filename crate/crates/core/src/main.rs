fn main() -> std::process::ExitCode {
    hrz_core::cli::main()
}
