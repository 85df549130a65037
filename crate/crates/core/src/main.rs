fn main() {
    std::process::exit(jevdpca::cli::run(std::env::args_os()));
}
