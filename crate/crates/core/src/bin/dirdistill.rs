fn main() {
    std::process::exit(dirdistill::cli::run(std::env::args_os()));
}
