fn main() {
    std::process::exit(phirl::cli::run(std::env::args_os()));
}
