fn main() {
    std::process::exit(noncobf::cli::main_with_args(std::env::args_os()));
}
