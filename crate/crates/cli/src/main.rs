fn main() {
    std::process::exit(akcs_cli::main_with_args(std::env::args_os()));
}
