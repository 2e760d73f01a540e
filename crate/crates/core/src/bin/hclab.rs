fn main() -> std::process::ExitCode {
    hclab::cli::main()
}
