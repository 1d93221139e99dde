fn main() {
    std::process::exit(opfrm::cli::run(std::env::args_os()));
}
