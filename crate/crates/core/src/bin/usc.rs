fn main() {
    std::process::exit(usc_core::cli::run(std::env::args_os()));
}
