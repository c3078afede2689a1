fn main() {
    std::process::exit(sitter_core::cli::main_with_args(std::env::args_os()));
}
