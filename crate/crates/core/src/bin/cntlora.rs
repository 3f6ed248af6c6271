fn main() {
    std::process::exit(cntlora::cli::main_with_args(std::env::args_os()));
}
