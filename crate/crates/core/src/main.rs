fn main() {
    std::process::exit(contentid::cli::main_with_args(std::env::args_os()));
}
