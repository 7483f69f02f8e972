fn main() {
    std::process::exit(lspm_cli::run(std::env::args_os()));
}
