fn main() {
    std::process::exit(rfselect::cli::run(std::env::args_os()));
}
