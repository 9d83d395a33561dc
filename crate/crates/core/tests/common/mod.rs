// Shared by several test targets; not every helper is used by each.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use shiftsim::decision::{Policy, PolicyConfig};
use shiftsim::report::LogRecord;
use shiftsim::scenario::{parse_scenario_str, Scenario};
use shiftsim::servicemodel::{validate_service, ServiceDoc, ServiceSpec};
use shiftsim::simengine::{EngineConfig, Simulation};
use shiftsim::topology::{build_infrastructure, Infrastructure, LinkSpec, NodeSpec, TopologySpec};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub const FIXTURES: [&str; 3] = ["sensor_monitoring.json", "see_through.json", "disaster.json"];

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_nodes: usize,
    pub max_services: usize,
    pub max_graphs: usize,
    pub max_vnfs: usize,
    /// Number of scripted shortages.
    pub shortages: usize,
    pub recover: bool,
}

impl Shape {
    pub const BUSY: Shape =
        Shape { max_nodes: 5, max_services: 5, max_graphs: 3, max_vnfs: 4, shortages: 3, recover: true };
    pub const SMALL: Shape =
        Shape { max_nodes: 4, max_services: 3, max_graphs: 2, max_vnfs: 3, shortages: 1, recover: false };
}

fn money(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo..hi) * 100.0).round() / 100.0
}

/// A random scenario document. Not guaranteed to be deployable at start.
pub fn random_doc(rng: &mut ChaCha8Rng, shape: Shape) -> Value {
    let n_nodes = rng.gen_range(2..=shape.max_nodes);
    let nodes: Vec<String> = (0..n_nodes).map(|i| format!("n{i}")).collect();
    let node_docs: Vec<Value> = nodes
        .iter()
        .map(|n| json!({ "id": n, "cpu": rng.gen_range(4..=12), "mem": rng.gen_range(8..=24) }))
        .collect();
    let mut links = Vec::new();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 1..n_nodes {
        pairs.insert((rng.gen_range(0..i), i));
    }
    for _ in 0..rng.gen_range(0..n_nodes) {
        let a = rng.gen_range(0..n_nodes);
        let b = rng.gen_range(0..n_nodes);
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    for (a, b) in &pairs {
        links.push(json!({
            "id": format!("l{a}-{b}"), "a": nodes[*a], "b": nodes[*b],
            "bw": rng.gen_range(20..=200), "latency_ms": rng.gen_range(1..=5)
        }));
    }

    let n_services = rng.gen_range(1..=shape.max_services);
    let mut services = Vec::new();
    for si in 0..n_services {
        let sid = format!("s{si}");
        let n0 = rng.gen_range(1..=shape.max_vnfs);
        let mut catalog: Vec<Value> = Vec::new();
        let mut level_vnfs: Vec<Vec<String>> = Vec::new();
        let mut cpu_of: BTreeMap<String, i64> = BTreeMap::new();
        let mut first = Vec::new();
        for v in 0..n0 {
            let id = format!("{sid}-v{v}");
            let cpu = rng.gen_range(1..=4);
            cpu_of.insert(id.clone(), cpu);
            catalog.push(json!({ "id": id, "cpu": cpu, "mem": rng.gen_range(1..=4), "proc_ms": 1 }));
            first.push(id);
        }
        level_vnfs.push(first);
        let n_graphs = rng.gen_range(1..=shape.max_graphs);
        for g in 1..n_graphs {
            let prev = level_vnfs[g - 1].clone();
            let heaviest = prev.iter().max_by_key(|v| (cpu_of[*v], std::cmp::Reverse((*v).clone()))).unwrap().clone();
            if cpu_of[&heaviest] <= 1 && prev.len() == 1 {
                break;
            }
            let mut next: Vec<String> = prev.iter().filter(|v| **v != heaviest).cloned().collect();
            // sometimes swap the heavy VNF for a light stand-in
            if next.is_empty() || (cpu_of[&heaviest] > 1 && rng.gen_bool(0.5)) {
                let id = format!("{sid}-lite{g}");
                let cpu = rng.gen_range(1..cpu_of[&heaviest].max(2));
                cpu_of.insert(id.clone(), cpu);
                catalog.push(json!({ "id": id, "cpu": cpu, "mem": 1, "proc_ms": 1 }));
                next.push(id);
            }
            level_vnfs.push(next);
        }
        let mut rev = money(rng, 10.0, 50.0);
        let mut utility = 1.0;
        let mut graphs = Vec::new();
        for (level, vnfs) in level_vnfs.iter().enumerate() {
            let vlinks: Vec<Value> = vnfs
                .windows(2)
                .map(|w| json!({ "src": w[0], "dst": w[1], "bw": rng.gen_range(1..=10) }))
                .collect();
            graphs.push(json!({
                "level": level, "utility": utility, "revenue_per_h": rev, "kpi_max_delay_ms": 500,
                "vnfs": vnfs, "vlinks": vlinks
            }));
            rev = money(rng, rev * 0.3, rev * 0.9);
            utility = (utility * 0.7 * 1000.0_f64).round() / 1000.0;
        }
        let penalty = if rng.gen_bool(0.2) { json!("SAFETY") } else { json!(money(rng, 10.0, 500.0)) };
        let mut rules = vec![json!({
            "id": format!("{sid}-delay"), "source": "service_delay", "subject": sid, "fire": 1.000001, "clear": 1.0
        })];
        if si == 0 {
            for (id, src) in [("node-cpu", "node_cpu"), ("node-mem", "node_mem"), ("link-util", "link_util")] {
                rules.push(json!({ "id": id, "source": src, "fire": 1.000001, "clear": 1.0 }));
            }
        }
        let fraction = [0.2, 0.5, 0.8, 1.0][rng.gen_range(0..4)];
        services.push(json!({
            "id": sid,
            "vertical": format!("v{}", rng.gen_range(0..2)),
            "priority": rng.gen_range(1..=3),
            "popularity": rng.gen_range(1..=100),
            "sla": {
                "max_secondary_fraction": fraction,
                "window_s": rng.gen_range(6..=36) * 100,
                "violation_penalty": penalty,
                "outage_penalty_rate": money(rng, 0.01, 0.1)
            },
            "vnfs": catalog,
            "graphs": graphs,
            "alert_rules": rules
        }));
    }

    let elements: Vec<String> = nodes.iter().cloned().chain(pairs.iter().map(|(a, b)| format!("l{a}-{b}"))).collect();
    let mut events = Vec::new();
    for _ in 0..shape.shortages {
        let t = rng.gen_range(200..=1200);
        if rng.gen_bool(0.6) {
            let e = elements[rng.gen_range(0..elements.len())].clone();
            events.push(json!({ "t": t, "kind": "fail", "args": { "element": e } }));
            if shape.recover && rng.gen_bool(0.7) {
                events.push(json!({ "t": t + rng.gen_range(300..=1500), "kind": "recover", "args": { "element": e } }));
            }
        } else {
            let s = format!("s{}", rng.gen_range(0..n_services));
            let f = (rng.gen_range(1.3..2.5) * 100.0_f64).round() / 100.0;
            events.push(json!({ "t": t, "kind": "load_change", "args": { "service": s, "factor": f } }));
            if shape.recover && rng.gen_bool(0.7) {
                events.push(json!({
                    "t": t + rng.gen_range(300..=1500), "kind": "load_change", "args": { "service": s, "factor": 1.0 }
                }));
            }
        }
    }
    json!({
        "infrastructure": { "nodes": node_docs, "links": links },
        "services": services,
        "events": events,
        "duration_s": rng.gen_range(24..=36) * 100
    })
}

/// A fuzz scenario that deploys at start, with its source document.
pub fn fuzz_scenario(seed: u64, shape: Shape) -> (Value, Scenario) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let doc = random_doc(&mut rng, shape);
        let sc = parse_scenario_str(&doc.to_string(), Path::new("fuzz.json")).expect("generated documents are valid");
        if Simulation::new(&sc, 1, EngineConfig::new(PolicyConfig::new(Policy::Payoff))).is_ok() {
            return (doc, sc);
        }
    }
}

/// `a:b|c:d` (or `-`) as pairs.
pub fn pairs(field: &str) -> Vec<(String, String)> {
    if field == "-" || field.is_empty() {
        return Vec::new();
    }
    field
        .split('|')
        .map(|kv| {
            let (a, b) = kv.rsplit_once(':').expect("pair list entry");
            (a.to_string(), b.to_string())
        })
        .collect()
}

/// `a|b|c` (or `-`) as items.
pub fn items(field: &str) -> Vec<String> {
    if field == "-" || field.is_empty() {
        return Vec::new();
    }
    field.split('|').map(String::from).collect()
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0)
}

/// Service state rebuilt from the event log alone.
#[derive(Debug, Default, Clone)]
pub struct Replay {
    /// Decided level (`level` records).
    pub levels: BTreeMap<String, usize>,
    /// Closed occupancy intervals in ms: (start, end, secondary).
    pub closed: BTreeMap<String, Vec<(u64, u64, bool)>>,
    /// Open interval start and whether it is secondary.
    pub open: BTreeMap<String, (u64, bool)>,
}

impl Replay {
    pub fn apply(&mut self, r: &LogRecord) {
        match r.kind.as_str() {
            "level" => {
                self.levels.insert(r.subject.clone(), r.get("level").unwrap().parse().unwrap());
            }
            "state" => {
                let t = r.t.as_millis();
                let occ = r.get("occ").unwrap();
                let secondary = occ.starts_with("level") && occ != "level0";
                if let Some((since, sec)) = self.open.insert(r.subject.clone(), (t, secondary)) {
                    self.closed.entry(r.subject.clone()).or_default().push((since, t, sec));
                }
            }
            _ => {}
        }
    }

    /// Secondary milliseconds within `[now - window, now]`.
    pub fn secondary_ms(&self, service: &str, now: u64, window: u64) -> u64 {
        let lo = now.saturating_sub(window);
        let clip = |a: u64, b: u64| b.min(now).saturating_sub(a.max(lo));
        let mut total: u64 =
            self.closed.get(service).into_iter().flatten().filter(|iv| iv.2).map(|&(a, b, _)| clip(a, b)).sum();
        if let Some(&(since, true)) = self.open.get(service) {
            total += clip(since, now);
        }
        total
    }

    /// Expected SLA verdict for shifting `service` down at `now`:
    /// `allow`, `denied_priority` or `denied_budget`.
    pub fn verdict(&self, sc: &Scenario, service: &str, now: u64, min_dwell_ms: u64) -> &'static str {
        let spec = sc.service(service).unwrap();
        for peer in &sc.services {
            if peer.vertical_id == spec.vertical_id
                && peer.service_id != spec.service_id
                && peer.sla.priority < spec.sla.priority
                && self.levels.get(&peer.service_id).copied().unwrap_or(0) == 0
            {
                return "denied_priority";
            }
        }
        let window = spec.sla.window.as_millis();
        let used = self.secondary_ms(service, now, window) + min_dwell_ms;
        if used as f64 > spec.sla.max_secondary_fraction * window as f64 + 1e-9 {
            "denied_budget"
        } else {
            "allow"
        }
    }
}

/// Reads revenue rates and popularity straight from a scenario document.
pub struct DocFacts {
    pub revenue: BTreeMap<String, Vec<f64>>,
    pub popularity: BTreeMap<String, f64>,
    pub penalty: BTreeMap<String, Option<f64>>,
}

impl DocFacts {
    pub fn new(doc: &Value) -> Self {
        let mut revenue = BTreeMap::new();
        let mut popularity = BTreeMap::new();
        let mut penalty = BTreeMap::new();
        for s in doc["services"].as_array().unwrap() {
            let id = s["id"].as_str().unwrap().to_string();
            let mut graphs: Vec<(u64, f64)> = s["graphs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|g| (g["level"].as_u64().unwrap(), g["revenue_per_h"].as_f64().unwrap()))
                .collect();
            graphs.sort_by_key(|g| g.0);
            revenue.insert(id.clone(), graphs.into_iter().map(|g| g.1).collect());
            popularity.insert(id.clone(), s["popularity"].as_f64().unwrap());
            penalty.insert(id, s["sla"]["violation_penalty"].as_f64());
        }
        DocFacts { revenue, popularity, penalty }
    }
}

pub fn read_doc(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Infrastructure from `(id, cpu, mem)` nodes and `(id, a, b, bw, latency)` links.
pub fn infra(nodes: &[(&str, f64, f64)], links: &[(&str, &str, &str, f64, f64)]) -> Infrastructure {
    build_infrastructure(&TopologySpec {
        nodes: nodes.iter().map(|&(id, cpu, mem)| NodeSpec { id: id.into(), cpu, mem }).collect(),
        links: links
            .iter()
            .map(|&(id, a, b, bw, latency_ms)| LinkSpec { id: id.into(), a: a.into(), b: b.into(), bw, latency_ms })
            .collect(),
    })
    .expect("valid test topology")
}

/// A service document with defaults for everything but the graphs.
/// `vnfs` are `(id, cpu, proc_ms)` with 1 unit of memory; `graphs` are
/// `(vnfs, vlinks as (src, dst, bw), revenue, kpi_ms)` by level.
pub fn service_doc(
    id: &str,
    vnfs: &[(&str, f64, f64)],
    graphs: &[(&[&str], &[(&str, &str, f64)], f64, f64)],
) -> Value {
    let graphs: Vec<Value> = graphs
        .iter()
        .enumerate()
        .map(|(level, (vs, links, rev, kpi))| {
            json!({
                "level": level, "utility": 1.0 / (level as f64 + 1.0), "revenue_per_h": rev, "kpi_max_delay_ms": kpi,
                "vnfs": vs,
                "vlinks": links.iter().map(|(s, d, bw)| json!({ "src": s, "dst": d, "bw": bw })).collect::<Vec<_>>()
            })
        })
        .collect();
    json!({
        "id": id, "vertical": "v", "priority": 1, "popularity": 10,
        "sla": { "max_secondary_fraction": 1.0, "window_s": 3600, "violation_penalty": 10.0, "outage_penalty_rate": 0.01 },
        "vnfs": vnfs.iter().map(|(v, cpu, proc)| json!({ "id": v, "cpu": cpu, "mem": 1, "proc_ms": proc })).collect::<Vec<_>>(),
        "graphs": graphs
    })
}

pub fn service(doc: Value) -> ServiceSpec {
    validate_service(&serde_json::from_value::<ServiceDoc>(doc).expect("service schema")).expect("valid service")
}
