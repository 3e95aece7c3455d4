fn main() {
    std::process::exit(simdreg::cli::main_with_args(std::env::args_os()));
}
