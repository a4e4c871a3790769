fn main() {
    std::process::exit(imvc::cli::main_with_args(std::env::args_os()));
}
