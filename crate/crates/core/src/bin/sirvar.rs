fn main() {
    std::process::exit(sirvar::cli::run(std::env::args_os()));
}
