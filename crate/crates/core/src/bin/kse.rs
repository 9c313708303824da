fn main() {
    std::process::exit(kse::cli::run(std::env::args_os()));
}
