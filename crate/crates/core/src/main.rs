fn main() {
    std::process::exit(propcrack::cli::main_with_args(std::env::args_os().collect()));
}
