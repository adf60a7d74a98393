fn main() {
    std::process::exit(zonodiff_cli::main_with_args(std::env::args_os()));
}
