fn main() {
    std::process::exit(sipfw::cli::main_with_args(std::env::args_os()));
}
