fn main() {
    std::process::exit(cme::cli::run_cli(std::env::args_os()));
}
