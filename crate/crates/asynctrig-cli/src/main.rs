fn main() {
    std::process::exit(asynctrig_cli::run_cli(std::env::args_os()));
}
