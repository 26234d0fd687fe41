fn main() {
    overdx_core::cli::init_logging();
    std::process::exit(overdx_core::cli::run(std::env::args_os()));
}
