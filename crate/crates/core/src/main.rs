fn main() {
    std::process::exit(alphasne::cli::main_with_args(std::env::args_os()));
}
