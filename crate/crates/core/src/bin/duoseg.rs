fn main() {
    std::process::exit(duoseg::cli::run_command(std::env::args_os()));
}
