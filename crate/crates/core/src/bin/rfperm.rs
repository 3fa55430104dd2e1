fn main() {
    std::process::exit(rfperm::cli::main_with_args(std::env::args_os()));
}
