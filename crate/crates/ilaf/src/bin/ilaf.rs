fn main() {
    std::process::exit(ilaf::harness::cli::run(std::env::args().skip(1)));
}
