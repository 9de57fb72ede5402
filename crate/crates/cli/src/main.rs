fn main() {
    std::process::exit(dbrf_cli::main_with_args(std::env::args_os()));
}
