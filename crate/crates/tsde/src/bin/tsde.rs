fn main() {
    std::process::exit(tsde::cli::main_with_args(std::env::args_os()));
}
