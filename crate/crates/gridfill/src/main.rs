fn main() {
    std::process::exit(gridfill::cli::main());
}
