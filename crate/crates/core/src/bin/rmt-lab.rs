fn main() {
    std::process::exit(rmt_lab::cli::main_with_args(std::env::args_os()));
}
