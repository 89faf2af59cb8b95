fn main() {
    std::process::exit(flipper::cli::run(std::env::args_os()));
}
