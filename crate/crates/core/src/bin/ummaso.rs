fn main() {
    std::process::exit(ummaso::cli::run(std::env::args_os()));
}
