fn main() -> std::process::ExitCode {
    hmrsel::cli::run(std::env::args_os())
}
