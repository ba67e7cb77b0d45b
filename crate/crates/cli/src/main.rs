fn main() {
    std::process::exit(dispflow_cli::main_with_args(std::env::args_os()));
}
