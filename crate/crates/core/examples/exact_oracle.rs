//! The exhaustive search that picks, for a tiny instance, the graph level
//! of every service that maximises total revenue.

use serde_json::json;
use shiftsim::placement::exhaustive_oracle;
use shiftsim::servicemodel::{validate_service, ServiceDoc};
use shiftsim::topology::{build_infrastructure, TopologySpec};

fn service(id: &str, primary_cpu: f64, revenue: [f64; 2]) -> serde_json::Value {
    json!({
        "id": id, "vertical": "demo", "priority": 1, "popularity": 10,
        "sla": { "max_secondary_fraction": 0.5, "window_s": 3600, "violation_penalty": 100.0, "outage_penalty_rate": 0.01 },
        "vnfs": [
            { "id": "big", "cpu": primary_cpu, "mem": 1, "proc_ms": 2 },
            { "id": "small", "cpu": 1, "mem": 1, "proc_ms": 2 }
        ],
        "graphs": [
            { "level": 0, "utility": 1.0, "revenue_per_h": revenue[0], "kpi_max_delay_ms": 50, "vnfs": ["big"], "vlinks": [] },
            { "level": 1, "utility": 0.5, "revenue_per_h": revenue[1], "kpi_max_delay_ms": 50, "vnfs": ["small"], "vlinks": [] }
        ]
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topo: TopologySpec = serde_json::from_value(json!({
        "nodes": [{ "id": "n1", "cpu": 4, "mem": 8 }],
        "links": []
    }))?;
    let infra = build_infrastructure(&topo)?;
    let services = [service("s1", 3.0, [10.0, 7.0]), service("s2", 3.0, [12.0, 5.0])]
        .into_iter()
        .map(|v| Ok(validate_service(&serde_json::from_value::<ServiceDoc>(v)?)?))
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;

    // both primaries need 6 CPU out of 4: one of them has to shift
    let best = exhaustive_oracle(&services, &infra)?;
    for s in &services {
        println!("{}: level {:?}", s.service_id, best.level(&s.service_id));
    }
    println!("revenue {}/h", best.revenue);
    Ok(())
}
