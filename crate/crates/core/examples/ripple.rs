//! A shift that only fits after another service's VNF is moved out of the
//! way, resolved with ripple migrations.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;
use shiftsim::decision::{count_reconfig_ops, foreign_vnfs, plan_transition, resolve_ripple, World};
use shiftsim::placement::{Deployment, Placement};
use shiftsim::servicemodel::{validate_service, ServiceDoc, ServiceSpec};
use shiftsim::topology::{build_infrastructure, TopologySpec};

fn service(id: &str, vnfs: &[(&str, f64)], graphs: &[&[&str]]) -> Result<ServiceSpec, Box<dyn std::error::Error>> {
    let graphs: Vec<_> = graphs
        .iter()
        .enumerate()
        .map(|(level, vs)| json!({
            "level": level, "utility": 1.0 / (level as f64 + 1.0), "revenue_per_h": 10.0 - level as f64,
            "kpi_max_delay_ms": 100, "vnfs": vs, "vlinks": []
        }))
        .collect();
    let doc = json!({
        "id": id, "vertical": id, "priority": 1, "popularity": 10,
        "sla": { "max_secondary_fraction": 1.0, "window_s": 3600, "violation_penalty": 10.0, "outage_penalty_rate": 0.01 },
        "vnfs": vnfs.iter().map(|(v, cpu)| json!({ "id": v, "cpu": cpu, "mem": 1, "proc_ms": 1 })).collect::<Vec<_>>(),
        "graphs": graphs
    });
    Ok(validate_service(&serde_json::from_value::<ServiceDoc>(doc)?)?)
}

fn on(spec: &ServiceSpec, hosts: &[(&str, &str)]) -> Deployment {
    let vnf_map = hosts.iter().map(|(v, n)| (v.to_string(), n.to_string())).collect();
    Deployment::new(spec, Placement { graph_level: 0, vnf_map, route_map: BTreeMap::new() }, 1.0, 1.0)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let topo: TopologySpec = serde_json::from_value(json!({
        "nodes": [{ "id": "n1", "cpu": 3, "mem": 8 }, { "id": "n2", "cpu": 4, "mem": 8 }],
        "links": [{ "id": "l1", "a": "n1", "b": "n2", "bw": 100, "latency_ms": 2 }]
    }))?;
    let infra = build_infrastructure(&topo)?;
    // "video" wants to swap its 1-CPU primary for a 3-CPU secondary
    let video = service("video", &[("rx", 1.0), ("fuse", 3.0)], &[&["rx"], &["fuse"]])?;
    let logs = service("logs", &[("agent", 1.0)], &[&["agent"]])?;
    let db = service("db", &[("store", 3.0)], &[&["store"]])?;
    let services: BTreeMap<_, _> = [&video, &logs, &db].iter().map(|s| (s.service_id.clone(), (*s).clone())).collect();
    let deployments = [on(&video, &[("rx", "n1")]), on(&logs, &[("agent", "n1")]), on(&db, &[("store", "n2")])]
        .into_iter()
        .map(|d| (d.service_id.clone(), d))
        .collect();
    let loads = BTreeMap::new();
    let world = World { infra: &infra, services: &services, loads: &loads, deployments, in_flight: BTreeSet::new() };

    println!("direct plan: {}", plan_transition(&world, "video", 0, 1).unwrap_err());
    println!("movable VNFs, smallest first:");
    for f in foreign_vnfs(&world, "video") {
        println!("  {}:{} on {} ({} cpu)", f.service, f.vnf, f.node, f.cpu);
    }
    let plan = resolve_ripple(&world, "video", 1, 2)?;
    for m in &plan.ripple_migrations {
        println!("migrate {}:{} {} -> {}", m.service, m.vnf, m.from, m.to);
    }
    println!("target: {:?}", plan.target.vnf_map);
    println!("{} operations", count_reconfig_ops(&plan));
    Ok(())
}
