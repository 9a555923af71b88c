fn main() {
    std::process::exit(evans_parity::cli::main_with_args(std::env::args_os()));
}
