fn main() {
    std::process::exit(pulsekit::cli::run(std::env::args_os()));
}
