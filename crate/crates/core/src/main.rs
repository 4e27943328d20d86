fn main() {
    std::process::exit(edrs::cli::run(std::env::args_os()));
}
