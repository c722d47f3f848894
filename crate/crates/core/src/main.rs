fn main() {
    std::process::exit(fastslow::cli::main_with_args(std::env::args_os()));
}
