fn main() {
    std::process::exit(predress::cli::run(std::env::args_os()));
}
