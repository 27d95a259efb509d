fn main() {
    std::process::exit(dbf_cli::run_cli(std::env::args_os()));
}
