fn main() -> std::process::ExitCode {
    tumorseg::cli::main()
}
