fn main() {
    std::process::exit(mcgehee::cli::run(std::env::args_os()));
}
