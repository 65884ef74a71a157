fn main() {
    std::process::exit(meta_audit::cli::run(std::env::args_os()));
}
