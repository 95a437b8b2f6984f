fn main() {
    std::process::exit(freewing::sim::cli::run_cli(std::env::args_os()));
}
