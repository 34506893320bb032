fn main() {
    std::process::exit(lrjs::cli::run());
}
