fn main() -> std::process::ExitCode {
    hggnn::cli::main()
}
