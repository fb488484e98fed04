fn main() {
    std::process::exit(gbf::cli::main());
}
