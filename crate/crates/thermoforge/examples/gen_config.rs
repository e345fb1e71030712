//! Prints the bundled synthetic-building configuration to stdout.
//!
//! `cargo run --example gen_config > my_config.json`

fn main() {
    let cfg = thermoforge::config::AppConfig::synthetic_default();
    println!("{}", serde_json::to_string_pretty(&cfg).unwrap());
}
