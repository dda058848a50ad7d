fn main() {
    std::process::exit(citysound::cli::run(std::env::args_os()));
}
