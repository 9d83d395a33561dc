//! The secondary-time budget of an SLA and the priority rule inside a
//! vertical, as seen by the down-shift admission check.

use std::collections::BTreeMap;
use std::path::Path;

use shiftsim::scenario::parse_scenario;
use shiftsim::servicemodel::{sla_allows_downshift, Occupancy, SlaState};
use shiftsim::time::SimTime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = parse_scenario(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/disaster.json")))?;
    let services: BTreeMap<String, _> = sc.services.iter().map(|s| (s.service_id.clone(), s.clone())).collect();
    let levels: BTreeMap<String, usize> = services.keys().map(|s| (s.clone(), 0)).collect();
    let dwell = SimTime::from_secs(120);

    let mut sla = SlaState::new();
    for s in services.values() {
        sla.register(&s.service_id, s.sla.window);
    }
    let now = SimTime::from_secs(1800);
    for s in services.values() {
        let verdict = sla_allows_downshift(s, &sla, now, &services, &levels, dwell)?;
        println!(
            "{:<12} vertical {:<12} priority {}  budget {:>5.0} s  -> {:?}",
            s.service_id,
            s.vertical_id,
            s.sla.priority,
            s.sla.max_secondary_fraction * s.sla.window.as_secs_f64(),
            verdict
        );
    }

    // spend most of an admissible budget and ask again
    let s = services
        .values()
        .find(|s| sla_allows_downshift(s, &sla, now, &services, &levels, dwell).is_ok_and(|v| v.is_allow()))
        .expect("an admissible service");
    let budget = (s.sla.max_secondary_fraction * s.sla.window.as_secs_f64()) as u64;
    sla.record_interval(&s.service_id, Occupancy::Level(1), SimTime::from_secs(0), SimTime::from_secs(budget - 60))?;
    let used = sla.ledger(&s.service_id).unwrap().secondary_millis(now) / 1000;
    let verdict = sla_allows_downshift(s, &sla, now, &services, &levels, dwell)?;
    println!("{} after {used} s secondary: {:?}", s.service_id, verdict);
    Ok(())
}
