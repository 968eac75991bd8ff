fn main() {
    std::process::exit(regflow::cli::main_with_args(std::env::args_os()));
}
