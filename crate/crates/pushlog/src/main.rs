fn main() {
    std::process::exit(pushlog::cli::main_from_args());
}
