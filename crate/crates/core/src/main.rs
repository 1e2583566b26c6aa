fn main() {
    std::process::exit(robust_forward::cli::main_with_args(std::env::args_os()));
}
