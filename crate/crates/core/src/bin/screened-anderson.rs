fn main() {
    std::process::exit(screened_anderson::cli::run(std::env::args_os()));
}
