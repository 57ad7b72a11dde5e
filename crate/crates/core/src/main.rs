fn main() -> std::process::ExitCode {
    habitform::cli::main()
}
