fn main() {
    std::process::exit(tubewave_cli::run_cli(std::env::args_os()));
}
