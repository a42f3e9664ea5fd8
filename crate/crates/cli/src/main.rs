fn main() {
    std::process::exit(cdcl_cli::run(std::env::args_os()));
}
