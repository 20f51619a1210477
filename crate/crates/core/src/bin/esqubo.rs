fn main() {
    std::process::exit(esqubo::cli::run(std::env::args_os()));
}
