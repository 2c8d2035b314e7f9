fn main() {
    std::process::exit(kinflow::cli::run(std::env::args_os()));
}
