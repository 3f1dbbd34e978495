fn main() {
    std::process::exit(lancaster_core::cli::main_with_args(std::env::args_os()));
}
