fn main() {
    std::process::exit(qdlab::cli::main_with_args(std::env::args_os()));
}
