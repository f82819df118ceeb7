fn main() {
    std::process::exit(josephson::cli::run(std::env::args_os()));
}
