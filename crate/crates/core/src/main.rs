fn main() {
    std::process::exit(arxid::cli::run(std::env::args_os()));
}
