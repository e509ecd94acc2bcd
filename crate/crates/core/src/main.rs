fn main() {
    std::process::exit(qlam::cli::main());
}
