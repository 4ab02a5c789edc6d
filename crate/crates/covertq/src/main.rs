fn main() {
    std::process::exit(covertq::cli::main_with_args(std::env::args_os()));
}
