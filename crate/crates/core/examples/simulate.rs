//! One full run of the vehicular see-through scenario (a roadside unit
//! fails, then recovers) and the per-service accounting it produces.

use std::path::Path;

use shiftsim::decision::{Policy, PolicyConfig};
use shiftsim::scenario::parse_scenario;
use shiftsim::simengine::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = parse_scenario(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/see_through.json")))?;
    let out = run(&sc, 7, PolicyConfig::new(Policy::Payoff))?;

    for r in out.report.decisions.iter() {
        println!("{:>8.1}s {:<12} {}", r.t.as_secs_f64(), r.kind, r.subject);
    }
    println!();
    for s in &out.report.services {
        println!(
            "{:<11} levels {:?} s, outage {:.1} s, revenue {:.2}, penalties {:.2}",
            s.id,
            s.level_seconds(),
            s.outage_s(),
            s.revenue,
            s.penalties
        );
    }
    println!("total revenue {:.2}, {} reconfiguration ops", out.report.total_revenue, out.report.reconfig_ops);
    Ok(())
}
