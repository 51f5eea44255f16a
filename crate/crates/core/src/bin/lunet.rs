fn main() {
    std::process::exit(lunet::cli::run_command(std::env::args_os()));
}
