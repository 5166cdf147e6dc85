fn main() {
    std::process::exit(strategem::cli::run(std::env::args_os()));
}
