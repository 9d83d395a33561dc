//! Greedy placement of a VNF chain, its routes and the resulting
//! end-to-end delay.

use std::path::Path;

use shiftsim::placement::{check_feasible, evaluate_kpis, place_graph, Deployment, Pinning};
use shiftsim::scenario::parse_scenario;
use shiftsim::topology::CapacityView;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = parse_scenario(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/sensor_monitoring.json")))?;
    let s = sc.service("sensors").expect("fixture service");
    let infra = &sc.infrastructure;

    for graph in &s.graphs {
        let p = place_graph(graph, &s.catalog, infra, &CapacityView::pristine(infra), &Pinning::default(), 1.0)?;
        println!("level {} (revenue {}/h)", graph.level, graph.revenue_rate);
        for (vnf, node) in &p.vnf_map {
            println!("  {vnf} -> {node}");
        }
        for (k, path) in &p.route_map {
            println!("  {k} via {}", if path.is_empty() { "(same node)".to_string() } else { path.join(" ") });
        }
        let kpi = evaluate_kpis(&p, graph, &s.catalog, infra)?;
        println!("  delay {:.1} ms of {} ms allowed, met: {}", kpi.end_to_end_delay_ms, graph.kpi_max_delay_ms, kpi.satisfied);
        let d = Deployment::new(s, p, 1.0, 1.0);
        println!("  feasible: {}", check_feasible([&d], infra).is_feasible());
    }
    Ok(())
}
