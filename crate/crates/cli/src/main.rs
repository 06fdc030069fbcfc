fn main() {
    std::process::exit(heat_cli::dispatch(std::env::args_os()));
}
