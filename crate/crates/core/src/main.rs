fn main() {
    std::process::exit(wpr::cli::run_cli(std::env::args_os()));
}
