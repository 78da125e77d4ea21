fn main() {
    std::process::exit(ant::cli::run());
}
