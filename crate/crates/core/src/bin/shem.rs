fn main() -> std::process::ExitCode {
    shem::cli::main()
}
