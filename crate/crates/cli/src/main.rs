fn main() {
    std::process::exit(trilinear_cli::run(std::env::args_os()));
}
