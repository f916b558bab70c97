fn main() -> std::process::ExitCode {
    cloudvar::cli::main()
}
