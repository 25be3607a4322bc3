//! Run configuration as flat `key = value` text: defaults, overrides, and
//! the canonical form written into every run manifest.
//!
//!     cargo run --release --example configuration

use visuomotor::pipeline::{TrainConfig, CONFIG_KEYS};

fn main() {
    let mut cfg = TrainConfig::parse_text("n = 40\ntau_v = 8   # slower visual dynamics\ngate_threshold = 0.001\n").unwrap();
    cfg.apply_override("alpha_m=0.002").unwrap();
    print!("{}", cfg.to_text());

    // Derived values such as d are written out, so the text is a fixed point.
    let text = cfg.to_text();
    assert_eq!(TrainConfig::parse_text(&text).unwrap().to_text(), text);
    println!("\n{} keys:", CONFIG_KEYS.len());
    for (key, doc) in CONFIG_KEYS {
        println!("  {key:<18} {doc}");
    }
    println!("\nrejected: {}", cfg.apply_override("tau_v=0.5").and_then(|_| cfg.validate()).unwrap_err());
}
