fn main() {
    std::process::exit(effortsim::run_cli(std::env::args_os()));
}
