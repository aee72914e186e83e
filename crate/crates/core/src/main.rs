fn main() {
    glearn::cli::init_logging();
    std::process::exit(glearn::cli::run(std::env::args_os()));
}
