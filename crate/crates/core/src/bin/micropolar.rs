fn main() {
    std::process::exit(micropolar::cli::run_cli(std::env::args_os()));
}
