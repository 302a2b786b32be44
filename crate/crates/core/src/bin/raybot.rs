fn main() {
    std::process::exit(raybot::cli::main_with_args(std::env::args_os()));
}
