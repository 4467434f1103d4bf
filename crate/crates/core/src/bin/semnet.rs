fn main() {
    std::process::exit(semnet::cli::parse_and_run(std::env::args_os()));
}
