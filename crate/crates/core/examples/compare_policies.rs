//! Every policy on the disaster scenario with the same seed, side by side.

use std::path::Path;

use shiftsim::decision::{Policy, PolicyConfig};
use shiftsim::scenario::parse_scenario;
use shiftsim::simengine::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = parse_scenario(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/disaster.json")))?;
    println!("{:<11} {:>9} {:>10} {:>9} {:>13} {:>4}", "policy", "revenue", "penalties", "outage_s", "kpi_violate_s", "ops");
    for p in Policy::ALL {
        let r = run(&sc, 3, PolicyConfig::new(p))?.report;
        println!(
            "{:<11} {:>9.2} {:>10.2} {:>9.1} {:>13.1} {:>4}",
            p.as_str(),
            r.total_revenue,
            r.total_penalties,
            r.total_outage_s,
            r.kpi_violation_s,
            r.reconfig_ops
        );
    }
    Ok(())
}
