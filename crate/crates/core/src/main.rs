fn main() {
    std::process::exit(coreset_core::cli::run(std::env::args_os()));
}
