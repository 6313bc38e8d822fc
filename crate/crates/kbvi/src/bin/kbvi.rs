fn main() {
    std::process::exit(kbvi::cli::run(std::env::args_os()));
}
