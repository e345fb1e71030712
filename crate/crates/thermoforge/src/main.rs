fn main() {
    std::process::exit(thermoforge::cli::run());
}
