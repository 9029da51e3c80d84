fn main() {
    std::process::exit(nilcomplex::cli::run(std::env::args_os()));
}
