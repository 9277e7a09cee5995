fn main() {
    std::process::exit(infdelay_cli::run_cli(std::env::args_os()));
}
