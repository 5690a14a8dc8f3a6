fn main() {
    std::process::exit(netsaddle::cli::main_with_args(std::env::args_os()));
}
