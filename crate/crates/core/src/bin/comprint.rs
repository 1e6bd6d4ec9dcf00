fn main() {
    std::process::exit(comprint::cli::run(std::env::args_os()));
}
