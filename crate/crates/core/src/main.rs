fn main() {
    std::process::exit(badr::cli::run(std::env::args_os()));
}
