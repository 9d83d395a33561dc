//! Exact search over small instances.
//!
//! Enumerates, per service, "not deployed" or every graph level with every
//! VNF-to-node assignment, routes each virtual link on the shortest simple
//! path that still has bandwidth (found by explicit path enumeration), and
//! keeps the feasible combination with the highest total revenue rate.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use thiserror::Error;

use super::{graph_demands, Placement};
use crate::servicemodel::{ServiceSpec, VLinkKey};
use crate::topology::{Infrastructure, CAPACITY_TOLERANCE};

/// Largest search space the oracle accepts.
pub const ORACLE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("search space of {0} combinations exceeds the oracle limit")]
    OracleTooLarge(u128),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalConfig {
    /// `None` means the service is not deployed.
    pub choices: BTreeMap<String, Option<Placement>>,
    /// Total revenue rate (money per hour) of the deployed graphs.
    pub revenue: f64,
}

impl OptimalConfig {
    pub fn level(&self, service: &str) -> Option<usize> {
        self.choices.get(service).and_then(|c| c.as_ref().map(|p| p.graph_level))
    }

    pub fn deployed_count(&self) -> usize {
        self.choices.values().filter(|c| c.is_some()).count()
    }

    pub fn all_deployed(&self) -> bool {
        self.choices.values().all(Option::is_some)
    }
}

pub fn exhaustive_oracle(services: &[ServiceSpec], infra: &Infrastructure) -> Result<OptimalConfig, OracleError> {
    exhaustive_oracle_with_load(services, &BTreeMap::new(), infra)
}

/// As [`exhaustive_oracle`], with per-service demand multipliers (missing
/// entries mean 1).
pub fn exhaustive_oracle_with_load(
    services: &[ServiceSpec],
    loads: &BTreeMap<String, f64>,
    infra: &Infrastructure,
) -> Result<OptimalConfig, OracleError> {
    let nodes: Vec<String> = infra.up_node_ids().into_iter().map(String::from).collect();
    let mut ordered: Vec<&ServiceSpec> = services.iter().collect();
    ordered.sort_by(|a, b| a.service_id.cmp(&b.service_id));

    let mut size: u128 = 1;
    for s in &ordered {
        let mut options: u128 = 1;
        for g in &s.graphs {
            options = options.saturating_add((nodes.len() as u128).saturating_pow(g.vnfs.len() as u32));
        }
        size = size.saturating_mul(options);
    }
    if size > ORACLE_LIMIT {
        return Err(OracleError::OracleTooLarge(size));
    }

    let mut search = Search {
        infra,
        nodes,
        services: ordered,
        loads,
        cpu: BTreeMap::new(),
        mem: BTreeMap::new(),
        bw: BTreeMap::new(),
        current: Vec::new(),
        best: None,
    };
    for n in infra.nodes() {
        search.cpu.insert(n.id.clone(), n.cpu_capacity);
        search.mem.insert(n.id.clone(), n.mem_capacity);
    }
    for l in infra.links() {
        search.bw.insert(l.id.clone(), l.bandwidth);
    }
    search.recurse(0);

    let best = search.best.expect("the empty configuration is always feasible");
    let choices = search
        .services
        .iter()
        .zip(best.choices)
        .map(|(s, c)| (s.service_id.clone(), c))
        .collect();
    Ok(OptimalConfig { choices, revenue: best.revenue })
}

struct Candidate {
    choices: Vec<Option<Placement>>,
    revenue: f64,
}

impl Candidate {
    fn deployed(&self) -> usize {
        self.choices.iter().filter(|c| c.is_some()).count()
    }

    /// Greater is better.
    fn rank(&self, other: &Candidate) -> Ordering {
        if (self.revenue - other.revenue).abs() > CAPACITY_TOLERANCE {
            return self.revenue.total_cmp(&other.revenue);
        }
        match self.deployed().cmp(&other.deployed()) {
            Ordering::Equal => {}
            o => return o,
        }
        for (a, b) in self.choices.iter().zip(&other.choices) {
            let la = a.as_ref().map_or(usize::MAX, |p| p.graph_level);
            let lb = b.as_ref().map_or(usize::MAX, |p| p.graph_level);
            match lb.cmp(&la) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        Ordering::Equal
    }
}

struct Search<'a> {
    infra: &'a Infrastructure,
    nodes: Vec<String>,
    services: Vec<&'a ServiceSpec>,
    loads: &'a BTreeMap<String, f64>,
    cpu: BTreeMap<String, f64>,
    mem: BTreeMap<String, f64>,
    bw: BTreeMap<String, f64>,
    current: Vec<Option<Placement>>,
    best: Option<Candidate>,
}

impl Search<'_> {
    fn recurse(&mut self, idx: usize) {
        if idx == self.services.len() {
            let revenue = self
                .services
                .iter()
                .zip(&self.current)
                .filter_map(|(s, c)| c.as_ref().map(|p| s.revenue_rate(p.graph_level)))
                .sum();
            let cand = Candidate { choices: self.current.clone(), revenue };
            if self.best.as_ref().map_or(true, |b| cand.rank(b) == Ordering::Greater) {
                self.best = Some(cand);
            }
            return;
        }
        self.current.push(None);
        self.recurse(idx + 1);
        self.current.pop();

        let service = self.services[idx];
        let factor = self.loads.get(&service.service_id).copied().unwrap_or(1.0);
        for graph in &service.graphs {
            let (demand, vlink_bw) = graph_demands(graph, &service.catalog, factor);
            let vnfs: Vec<&String> = graph.vnfs.iter().collect();
            let total = self.nodes.len().pow(vnfs.len() as u32);
            for code in 0..total {
                let mut vnf_map = BTreeMap::new();
                let mut c = code;
                for v in &vnfs {
                    vnf_map.insert((*v).clone(), self.nodes[c % self.nodes.len()].clone());
                    c /= self.nodes.len();
                }
                let mut fits = true;
                for (v, n) in &vnf_map {
                    *self.cpu.get_mut(n).unwrap() -= demand[v].cpu;
                    *self.mem.get_mut(n).unwrap() -= demand[v].mem;
                }
                for n in vnf_map.values() {
                    if self.cpu[n] < -CAPACITY_TOLERANCE || self.mem[n] < -CAPACITY_TOLERANCE {
                        fits = false;
                    }
                }
                let mut routed: Vec<(VLinkKey, Vec<String>)> = Vec::new();
                if fits {
                    for (key, need) in &vlink_bw {
                        match self.shortest_feasible_path(&vnf_map[&key.src], &vnf_map[&key.dst], *need) {
                            Some(path) => {
                                for l in &path {
                                    *self.bw.get_mut(l).unwrap() -= need;
                                }
                                routed.push((key.clone(), path));
                            }
                            None => {
                                fits = false;
                                break;
                            }
                        }
                    }
                }
                if fits {
                    let placement = Placement {
                        graph_level: graph.level,
                        vnf_map: vnf_map.clone(),
                        route_map: routed.iter().cloned().collect(),
                    };
                    self.current.push(Some(placement));
                    self.recurse(idx + 1);
                    self.current.pop();
                }
                for (key, path) in &routed {
                    for l in path {
                        *self.bw.get_mut(l).unwrap() += vlink_bw[key];
                    }
                }
                for (v, n) in &vnf_map {
                    *self.cpu.get_mut(n).unwrap() += demand[v].cpu;
                    *self.mem.get_mut(n).unwrap() += demand[v].mem;
                }
            }
        }
    }

    /// Enumerates all simple paths and keeps the best by (latency, hops, ids).
    fn shortest_feasible_path(&self, src: &str, dst: &str, need: f64) -> Option<Vec<String>> {
        if src == dst {
            return Some(Vec::new());
        }
        let mut best: Option<(f64, Vec<String>)> = None;
        let mut visited = vec![src.to_string()];
        let mut path = Vec::new();
        self.dfs(src, dst, need, 0.0, &mut visited, &mut path, &mut best);
        best.map(|(_, p)| p)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        at: &str,
        dst: &str,
        need: f64,
        latency: f64,
        visited: &mut Vec<String>,
        path: &mut Vec<String>,
        best: &mut Option<(f64, Vec<String>)>,
    ) {
        if at == dst {
            let better = match best {
                None => true,
                Some((bl, bp)) => {
                    if (latency - *bl).abs() > CAPACITY_TOLERANCE {
                        latency < *bl
                    } else {
                        (path.len(), &*path) < (bp.len(), &*bp)
                    }
                }
            };
            if better {
                *best = Some((latency, path.clone()));
            }
            return;
        }
        for link in self.infra.links() {
            let Some(next) = link.other_end(at) else { continue };
            if !self.infra.is_link_usable(&link.id) || visited.iter().any(|v| v == next) {
                continue;
            }
            if self.bw[&link.id] + CAPACITY_TOLERANCE < need {
                continue;
            }
            visited.push(next.to_string());
            path.push(link.id.clone());
            self.dfs(next, dst, need, latency + link.latency_ms, visited, path, best);
            path.pop();
            visited.pop();
        }
    }
}
