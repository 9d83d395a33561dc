//! Loads a scenario file, writes it back out and checks nothing was lost.
//!
//! Pass a path to try another file: `cargo run --example scenario_roundtrip -- my.json`

use std::path::PathBuf;

use shiftsim::scenario::{emit, parse_scenario, parse_scenario_str};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sensor_monitoring.json")));
    let sc = parse_scenario(&path)?;
    let text = emit(&sc);
    let back = parse_scenario_str(&text, &path)?;
    println!(
        "{}: {} nodes, {} links, {} services, {} events, {} s",
        path.display(),
        sc.infrastructure.nodes().count(),
        sc.infrastructure.links().count(),
        sc.services.len(),
        sc.events.len(),
        sc.duration.as_secs_f64()
    );
    println!("round trip {}", if back == sc { "exact" } else { "LOSSY" });
    Ok(())
}
