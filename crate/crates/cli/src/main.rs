fn main() -> std::process::ExitCode {
    esdiag_cli::run()
}
