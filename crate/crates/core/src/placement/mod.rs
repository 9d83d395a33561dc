//! Embedding VNF graphs onto the infrastructure.
//!
//! [`place_graph`] is a greedy best-fit heuristic: VNFs go, in topological
//! order, to the up node with the most residual CPU that fits them, and
//! every virtual link takes the minimum-latency path with enough residual
//! bandwidth. [`exhaustive_oracle`] solves small instances exactly and is
//! used to check the heuristic.

mod oracle;
mod route;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::servicemodel::{ServiceSpec, VLinkKey, VnfDescriptor, VnfGraph};
use crate::topology::{CapacityView, Infrastructure, CAPACITY_TOLERANCE};

pub use oracle::{exhaustive_oracle, exhaustive_oracle_with_load, OptimalConfig, OracleError, ORACLE_LIMIT};
pub use route::route_vlink;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Infeasible {
    #[error("no node can host vnf {0:?}")]
    Vnf(String),
    #[error("no path with enough bandwidth for vlink {0}")]
    Vlink(VLinkKey),
    #[error("no path with enough bandwidth between {src:?} and {dst:?}")]
    NoPath { src: String, dst: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KpiError {
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Placement {
    pub graph_level: usize,
    pub vnf_map: BTreeMap<String, String>,
    /// Ordered link ids per virtual link; empty when both ends share a node.
    pub route_map: BTreeMap<VLinkKey, Vec<String>>,
}

/// VNFs and routes kept where they are during a (re)placement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pinning {
    pub vnfs: BTreeMap<String, String>,
    pub routes: BTreeMap<VLinkKey, Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demand {
    pub cpu: f64,
    pub mem: f64,
}

/// Effective per-VNF demand and per-vlink bandwidth of `graph` under a
/// multiplicative load factor.
pub fn graph_demands(
    graph: &VnfGraph,
    catalog: &BTreeMap<String, VnfDescriptor>,
    factor: f64,
) -> (BTreeMap<String, Demand>, BTreeMap<VLinkKey, f64>) {
    let vnfs = graph
        .vnfs
        .iter()
        .map(|v| {
            let d = &catalog[v];
            (v.clone(), Demand { cpu: d.cpu_demand * factor, mem: d.mem_demand * factor })
        })
        .collect();
    let vlinks = graph.vlinks.iter().map(|(k, bw)| (k.clone(), bw * factor)).collect();
    (vnfs, vlinks)
}

/// A service's active graph, where it runs, and what it reserves.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub service_id: String,
    pub placement: Placement,
    pub vnf_demand: BTreeMap<String, Demand>,
    pub vlink_bw: BTreeMap<VLinkKey, f64>,
    /// Fraction of the nominal reservation actually granted; below 1 the
    /// KPIs are considered violated.
    pub scale: f64,
}

impl Deployment {
    /// `load` multiplies nominal demand; `scale` multiplies the reservation.
    pub fn new(service: &ServiceSpec, placement: Placement, load: f64, scale: f64) -> Self {
        let graph = &service.graphs[placement.graph_level];
        let (vnf_demand, vlink_bw) = graph_demands(graph, &service.catalog, load * scale);
        Deployment { service_id: service.service_id.clone(), placement, vnf_demand, vlink_bw, scale }
    }

    pub fn level(&self) -> usize {
        self.placement.graph_level
    }

    pub fn node_loads(&self) -> impl Iterator<Item = (&str, f64, f64)> {
        self.placement
            .vnf_map
            .iter()
            .map(|(v, n)| (n.as_str(), self.vnf_demand[v].cpu, self.vnf_demand[v].mem))
    }

    pub fn route_loads(&self) -> impl Iterator<Item = (&[String], f64)> {
        self.placement.route_map.iter().map(|(k, links)| (links.as_slice(), self.vlink_bw[k]))
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        self.placement.vnf_map.values().map(String::as_str).collect()
    }

    pub fn links(&self) -> BTreeSet<&str> {
        self.placement.route_map.values().flatten().map(String::as_str).collect()
    }

    pub fn uses_element(&self, id: &str) -> bool {
        self.placement.vnf_map.values().any(|n| n == id) || self.placement.route_map.values().flatten().any(|l| l == id)
    }
}

/// Greedy best-fit embedding of `graph` within `residual`.
///
/// Pinned VNFs and routes are assumed already reserved in `residual`.
/// KPIs are not checked here; see [`evaluate_kpis`].
pub fn place_graph(
    graph: &VnfGraph,
    catalog: &BTreeMap<String, VnfDescriptor>,
    infra: &Infrastructure,
    residual: &CapacityView,
    pinned: &Pinning,
    factor: f64,
) -> Result<Placement, Infeasible> {
    let (demand, bw) = graph_demands(graph, catalog, factor);
    let mut work = residual.clone();
    let mut vnf_map = BTreeMap::new();
    for vnf in graph.topo_order() {
        if let Some(node) = pinned.vnfs.get(vnf) {
            vnf_map.insert(vnf.clone(), node.clone());
            continue;
        }
        let d = demand[vnf];
        let mut best: Option<(&str, f64)> = None;
        for node in infra.up_node_ids() {
            if !work.fits_vnf(node, d.cpu, d.mem) {
                continue;
            }
            let cpu = work.cpu(node);
            // strict comparison keeps the lexicographically first node on ties
            if best.map_or(true, |(_, b)| cpu > b + CAPACITY_TOLERANCE) {
                best = Some((node, cpu));
            }
        }
        let (node, _) = best.ok_or_else(|| Infeasible::Vnf(vnf.clone()))?;
        work.adjust_vnf(node, -d.cpu, -d.mem);
        vnf_map.insert(vnf.clone(), node.to_string());
    }
    let mut route_map = BTreeMap::new();
    for (key, need) in &bw {
        if let Some(path) = pinned.routes.get(key) {
            route_map.insert(key.clone(), path.clone());
            continue;
        }
        let path = route_vlink(infra, &work, &vnf_map[&key.src], &vnf_map[&key.dst], *need)
            .map_err(|_| Infeasible::Vlink(key.clone()))?;
        work.adjust_path(&path, -need);
        route_map.insert(key.clone(), path);
    }
    Ok(Placement { graph_level: graph.level, vnf_map, route_map })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KpiReport {
    pub end_to_end_delay_ms: f64,
    pub satisfied: bool,
}

/// End-to-end delay is the longest source-to-sink path of the DAG, counting
/// each VNF's processing delay and the latency of each routed link.
pub fn evaluate_kpis(
    placement: &Placement,
    graph: &VnfGraph,
    catalog: &BTreeMap<String, VnfDescriptor>,
    infra: &Infrastructure,
) -> Result<KpiReport, KpiError> {
    let mut link_latency = BTreeMap::new();
    for key in graph.vlinks.keys() {
        let path = placement
            .route_map
            .get(key)
            .ok_or_else(|| KpiError::InvalidPlacement(format!("vlink {key} has no route")))?;
        let mut lat = 0.0;
        for l in path {
            lat += infra
                .link(l)
                .ok_or_else(|| KpiError::InvalidPlacement(format!("unknown link {l:?}")))?
                .latency_ms;
        }
        link_latency.insert(key, lat);
    }
    let mut arrive: BTreeMap<&str, f64> = BTreeMap::new();
    let mut worst: f64 = 0.0;
    for vnf in graph.topo_order() {
        if !placement.vnf_map.contains_key(vnf) {
            return Err(KpiError::InvalidPlacement(format!("vnf {vnf:?} is not mapped")));
        }
        let upstream = graph
            .predecessors(vnf)
            .map(|(k, _)| arrive[k.src.as_str()] + link_latency[k])
            .fold(0.0, f64::max);
        let done = upstream + catalog[vnf].proc_delay_ms;
        worst = worst.max(done);
        arrive.insert(vnf, done);
    }
    Ok(KpiReport { end_to_end_delay_ms: worst, satisfied: worst <= graph.kpi_max_delay_ms + CAPACITY_TOLERANCE })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    ElementDown,
    Cpu,
    Mem,
    Bandwidth,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::ElementDown => "element_down",
            ViolationKind::Cpu => "cpu",
            ViolationKind::Mem => "mem",
            ViolationKind::Bandwidth => "bandwidth",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub element: String,
    pub kind: ViolationKind,
    /// Excess over capacity, or for a down element the demand stranded on it.
    pub amount: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn elements(&self) -> BTreeSet<&str> {
        self.violations.iter().map(|v| v.element.as_str()).collect()
    }

    /// Whether any violation sits on an element used by `d`.
    pub fn touches(&self, d: &Deployment) -> bool {
        self.violations.iter().any(|v| d.uses_element(&v.element))
    }
}

/// Every capacity overload and every placement on a down (or missing)
/// element, nodes first, each group in id order.
pub fn check_feasible<'a>(
    deployments: impl IntoIterator<Item = &'a Deployment>,
    infra: &Infrastructure,
) -> FeasibilityReport {
    let mut node_load: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    let mut link_load: BTreeMap<&str, f64> = BTreeMap::new();
    for d in deployments {
        for (n, cpu, mem) in d.node_loads() {
            let e = node_load.entry(n).or_insert((0.0, 0.0));
            e.0 += cpu;
            e.1 += mem;
        }
        for (links, bw) in d.route_loads() {
            for l in links {
                *link_load.entry(l.as_str()).or_insert(0.0) += bw;
            }
        }
    }
    let mut violations = Vec::new();
    for (n, (cpu, mem)) in node_load {
        match infra.node(n) {
            Some(node) if infra.is_node_up(n) => {
                if cpu - node.cpu_capacity > CAPACITY_TOLERANCE {
                    violations.push(Violation { element: n.into(), kind: ViolationKind::Cpu, amount: cpu - node.cpu_capacity });
                }
                if mem - node.mem_capacity > CAPACITY_TOLERANCE {
                    violations.push(Violation { element: n.into(), kind: ViolationKind::Mem, amount: mem - node.mem_capacity });
                }
            }
            _ => violations.push(Violation { element: n.into(), kind: ViolationKind::ElementDown, amount: cpu }),
        }
    }
    for (l, bw) in link_load {
        match infra.link(l) {
            Some(link) if infra.is_link_usable(l) => {
                if bw - link.bandwidth > CAPACITY_TOLERANCE {
                    violations.push(Violation {
                        element: l.into(),
                        kind: ViolationKind::Bandwidth,
                        amount: bw - link.bandwidth,
                    });
                }
            }
            _ => violations.push(Violation { element: l.into(), kind: ViolationKind::ElementDown, amount: bw }),
        }
    }
    FeasibilityReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_infrastructure, residual_capacity, LinkSpec, NodeSpec, Status, TopologySpec};

    fn infra(cpus: &[f64]) -> Infrastructure {
        build_infrastructure(&TopologySpec {
            nodes: cpus
                .iter()
                .enumerate()
                .map(|(i, c)| NodeSpec { id: format!("n{}", i + 1), cpu: *c, mem: 100.0 })
                .collect(),
            links: (1..cpus.len())
                .map(|i| LinkSpec {
                    id: format!("l{i}"),
                    a: format!("n{i}"),
                    b: format!("n{}", i + 1),
                    bw: 100.0,
                    latency_ms: 5.0,
                })
                .collect(),
        })
        .unwrap()
    }

    fn dep(service: &str, vnfs: &[(&str, &str, f64)]) -> Deployment {
        Deployment {
            service_id: service.into(),
            placement: Placement {
                graph_level: 0,
                vnf_map: vnfs.iter().map(|(v, n, _)| (v.to_string(), n.to_string())).collect(),
                route_map: BTreeMap::new(),
            },
            vnf_demand: vnfs.iter().map(|(v, _, c)| (v.to_string(), Demand { cpu: *c, mem: 1.0 })).collect(),
            vlink_bw: BTreeMap::new(),
            scale: 1.0,
        }
    }

    #[test]
    fn feasibility_reports_overload_and_down() {
        let inf = infra(&[4.0, 4.0]);
        assert!(check_feasible([], &inf).is_feasible());

        let a = dep("a", &[("x", "n1", 3.0)]);
        let b = dep("b", &[("y", "n1", 2.0)]);
        let rep = check_feasible([&a, &b], &inf);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].element, "n1");
        assert_eq!(rep.violations[0].kind, ViolationKind::Cpu);
        assert!((rep.violations[0].amount - 1.0).abs() < 1e-9);

        let down = inf.apply_status_change("n1", Status::Down).unwrap();
        let rep = check_feasible([&a], &down);
        assert_eq!(rep.violations[0].kind, ViolationKind::ElementDown);
        assert!(rep.touches(&a));
    }

    #[test]
    fn residual_subtracts_and_may_go_negative() {
        let inf = infra(&[4.0]);
        let a = dep("a", &[("x", "n1", 3.0)]);
        assert!((residual_capacity(&inf, [&a]).unwrap().cpu("n1") - 1.0).abs() < 1e-12);
        let b = dep("b", &[("y", "n1", 2.0)]);
        let view = residual_capacity(&inf, [&a, &b]).unwrap();
        assert!((view.cpu("n1") + 1.0).abs() < 1e-12);
        assert_eq!(view.oversubscribed(), vec!["n1"]);
        let ghost = dep("c", &[("z", "n7", 1.0)]);
        assert!(residual_capacity(&inf, [&ghost]).is_err());
    }
}
