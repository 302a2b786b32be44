//! Single-thread inference latency for presets A-D (pass other preset
//! names as arguments).

use raybot::cli::bench_table;
use raybot::eval::bench_inference;
use raybot::net::NetworkConfig;

fn main() {
    let mut names: Vec<String> = std::env::args().skip(1).collect();
    if names.is_empty() {
        names = ["A", "B", "C", "D"].map(String::from).to_vec();
    }
    let reports: Vec<_> = names
        .iter()
        .map(|n| bench_inference(&NetworkConfig::preset(n).expect("known preset"), 20, 200))
        .collect();
    print!("{}", bench_table(&reports));
}
