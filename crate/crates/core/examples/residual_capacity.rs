//! Residual capacity of a small edge topology, before and after a node
//! goes down.

use std::path::Path;

use shiftsim::placement::{place_graph, Deployment, Pinning};
use shiftsim::scenario::parse_scenario;
use shiftsim::topology::{residual_capacity, CapacityView, Status};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = parse_scenario(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/see_through.json")))?;
    let mut deployments = Vec::new();
    for s in &sc.services {
        let view = residual_capacity(&sc.infrastructure, &deployments)?;
        let p = place_graph(&s.graphs[0], &s.catalog, &sc.infrastructure, &view, &Pinning::default(), 1.0)?;
        deployments.push(Deployment::new(s, p, 1.0, 1.0));
    }

    let show = |title: &str, view: &CapacityView| {
        println!("{title}");
        for n in sc.infrastructure.nodes() {
            println!("  {:<6} cpu {:>6.2}  mem {:>6.2}", n.id, view.cpu(&n.id), view.mem(&n.id));
        }
        for l in sc.infrastructure.links() {
            println!("  {:<10} bw {:>7.2}", l.id, view.bw(&l.id));
        }
    };
    show("with every primary graph placed:", &residual_capacity(&sc.infrastructure, &deployments)?);

    let failed = sc.infrastructure.apply_status_change("rsu1", Status::Down)?;
    let view = residual_capacity(&failed, &deployments)?;
    show("after rsu1 fails:", &view);
    println!("oversubscribed: {:?}", view.oversubscribed());
    Ok(())
}
