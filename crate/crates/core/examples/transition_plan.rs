//! Shift-down plans for the two example services: one whose secondary
//! graph reuses most VNFs, one whose graphs share nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use shiftsim::decision::{count_reconfig_ops, plan_transition, schedule, World};
use shiftsim::placement::{place_graph, Deployment, Pinning};
use shiftsim::scenario::parse_scenario;
use shiftsim::simengine::RngState;
use shiftsim::topology::residual_capacity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (file, service) in [("sensor_monitoring.json", "sensors"), ("see_through.json", "seethrough")] {
        let sc = parse_scenario(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(file))?;
        let services: BTreeMap<_, _> = sc.services.iter().map(|s| (s.service_id.clone(), s.clone())).collect();
        let mut deployments = BTreeMap::new();
        for s in &sc.services {
            let view = residual_capacity(&sc.infrastructure, deployments.values())?;
            let p = place_graph(&s.graphs[0], &s.catalog, &sc.infrastructure, &view, &Pinning::default(), 1.0)?;
            deployments.insert(s.service_id.clone(), Deployment::new(s, p, 1.0, 1.0));
        }
        let loads = BTreeMap::new();
        let world = World { infra: &sc.infrastructure, services: &services, loads: &loads, deployments, in_flight: BTreeSet::new() };

        let mut plan = plan_transition(&world, service, 0, 1)?;
        schedule(&mut plan, &sc.delays, &mut RngState::new(1));
        println!("{service}: {} operations, {:.1} s to enact", count_reconfig_ops(&plan), plan.duration().as_secs_f64());
        for a in &plan.timeline {
            println!("  {:>6.1}s  {:<12} {}", a.start.as_secs_f64(), a.kind.as_str(), a.target);
        }
    }
    Ok(())
}
