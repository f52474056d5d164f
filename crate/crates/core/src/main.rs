fn main() {
    std::process::exit(curvpath::cli::main_with_args(std::env::args_os()));
}
