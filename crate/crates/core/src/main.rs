fn main() {
    std::process::exit(fieldpipe::cli::main_with_args(std::env::args_os()));
}
