fn main() {
    std::process::exit(wcris::cli::main_with_args(std::env::args_os()));
}
