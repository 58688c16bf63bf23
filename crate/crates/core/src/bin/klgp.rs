fn main() {
    std::process::exit(klgp::cli::main_with_args(std::env::args_os()));
}
