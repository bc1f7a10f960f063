fn main() {
    std::process::exit(earnav::cli::run(std::env::args_os()));
}
