fn main() {
    std::process::exit(confluence_kit::cli::run(std::env::args_os()));
}
