fn main() {
    std::process::exit(deepctc::cli::main_with_args(std::env::args_os()));
}
