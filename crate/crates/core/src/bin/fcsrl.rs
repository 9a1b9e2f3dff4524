fn main() {
    fcsrl::cli::init_logging();
    std::process::exit(fcsrl::cli::run(std::env::args_os()));
}
