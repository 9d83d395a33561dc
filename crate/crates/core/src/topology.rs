//! Physical infrastructure: compute nodes, links, their capacities and
//! up/down status, and residual-capacity bookkeeping.
//!
//! Links are undirected; a link's bandwidth is shared by both directions.
//! Node-internal latency is zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::Deployment;

/// Absolute tolerance for every capacity comparison.
pub const CAPACITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Up,
    Down,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("duplicate element id {0:?}")]
    DuplicateId(String),
    #[error("link {link:?} references unknown node {node:?}")]
    DanglingEndpoint { link: String, node: String },
    #[error("element {element:?} has non-positive {field}")]
    NonPositiveCapacity { element: String, field: &'static str },
    #[error("link {0:?} connects a node to itself")]
    SelfLoop(String),
    #[error("link {0:?} has negative or non-finite latency")]
    InvalidLatency(String),
    #[error("invalid id {0:?}: ids are non-empty and use only [A-Za-z0-9_.-]")]
    InvalidId(String),
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("placement of service {service:?} references missing element {element:?}")]
    InconsistentPlacement { service: String, element: String },
}

/// Ids end up in comma/semicolon separated logs, so the alphabet is closed.
pub(crate) fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeNode {
    pub id: String,
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetLink {
    pub id: String,
    pub endpoints: (String, String),
    pub bandwidth: f64,
    pub latency_ms: f64,
    pub status: Status,
}

impl NetLink {
    /// The endpoint opposite to `node`, if `node` is an endpoint.
    pub fn other_end(&self, node: &str) -> Option<&str> {
        if self.endpoints.0 == node {
            Some(&self.endpoints.1)
        } else if self.endpoints.1 == node {
            Some(&self.endpoints.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub cpu: f64,
    pub mem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub id: String,
    pub a: String,
    pub b: String,
    pub bw: f64,
    pub latency_ms: f64,
}

/// Raw topology description as found in a scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Infrastructure {
    nodes: BTreeMap<String, ComputeNode>,
    links: BTreeMap<String, NetLink>,
}

/// Validates a raw description. Node and link ids share one namespace.
pub fn build_infrastructure(spec: &TopologySpec) -> Result<Infrastructure, TopologyError> {
    let mut seen = BTreeSet::new();
    let mut nodes = BTreeMap::new();
    for n in &spec.nodes {
        if !is_valid_id(&n.id) {
            return Err(TopologyError::InvalidId(n.id.clone()));
        }
        if !seen.insert(n.id.clone()) {
            return Err(TopologyError::DuplicateId(n.id.clone()));
        }
        for (field, v) in [("cpu_capacity", n.cpu), ("mem_capacity", n.mem)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TopologyError::NonPositiveCapacity { element: n.id.clone(), field });
            }
        }
        nodes.insert(
            n.id.clone(),
            ComputeNode { id: n.id.clone(), cpu_capacity: n.cpu, mem_capacity: n.mem, status: Status::Up },
        );
    }
    let mut links = BTreeMap::new();
    for l in &spec.links {
        if !is_valid_id(&l.id) {
            return Err(TopologyError::InvalidId(l.id.clone()));
        }
        if !seen.insert(l.id.clone()) {
            return Err(TopologyError::DuplicateId(l.id.clone()));
        }
        for end in [&l.a, &l.b] {
            if !nodes.contains_key(end) {
                return Err(TopologyError::DanglingEndpoint { link: l.id.clone(), node: end.clone() });
            }
        }
        if l.a == l.b {
            return Err(TopologyError::SelfLoop(l.id.clone()));
        }
        if !(l.bw.is_finite() && l.bw > 0.0) {
            return Err(TopologyError::NonPositiveCapacity { element: l.id.clone(), field: "bandwidth" });
        }
        if !(l.latency_ms.is_finite() && l.latency_ms >= 0.0) {
            return Err(TopologyError::InvalidLatency(l.id.clone()));
        }
        links.insert(
            l.id.clone(),
            NetLink {
                id: l.id.clone(),
                endpoints: (l.a.clone(), l.b.clone()),
                bandwidth: l.bw,
                latency_ms: l.latency_ms,
                status: Status::Up,
            },
        );
    }
    Ok(Infrastructure { nodes, links })
}

impl Infrastructure {
    pub fn nodes(&self) -> impl Iterator<Item = &ComputeNode> {
        self.nodes.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &NetLink> {
        self.links.values()
    }

    pub fn node(&self, id: &str) -> Option<&ComputeNode> {
        self.nodes.get(id)
    }

    pub fn link(&self, id: &str) -> Option<&NetLink> {
        self.links.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id) || self.links.contains_key(id)
    }

    pub fn status(&self, id: &str) -> Option<Status> {
        self.nodes
            .get(id)
            .map(|n| n.status)
            .or_else(|| self.links.get(id).map(|l| l.status))
    }

    pub fn is_node_up(&self, id: &str) -> bool {
        matches!(self.nodes.get(id), Some(n) if n.status == Status::Up)
    }

    /// A link carries traffic only if it and both of its endpoints are up.
    pub fn is_link_usable(&self, id: &str) -> bool {
        match self.links.get(id) {
            Some(l) => {
                l.status == Status::Up && self.is_node_up(&l.endpoints.0) && self.is_node_up(&l.endpoints.1)
            }
            None => false,
        }
    }

    pub fn up_node_ids(&self) -> Vec<&str> {
        self.nodes.values().filter(|n| n.status == Status::Up).map(|n| n.id.as_str()).collect()
    }

    /// Links incident to `node`, in id order.
    pub fn incident_links<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a NetLink> + 'a {
        self.links.values().filter(move |l| l.endpoints.0 == node || l.endpoints.1 == node)
    }

    /// Sets the status of a node or link. Idempotent.
    pub fn set_status(&mut self, id: &str, status: Status) -> Result<(), TopologyError> {
        if let Some(n) = self.nodes.get_mut(id) {
            n.status = status;
            Ok(())
        } else if let Some(l) = self.links.get_mut(id) {
            l.status = status;
            Ok(())
        } else {
            Err(TopologyError::UnknownElement(id.to_string()))
        }
    }

    /// Value-returning form of [`Infrastructure::set_status`].
    pub fn apply_status_change(&self, id: &str, status: Status) -> Result<Infrastructure, TopologyError> {
        let mut next = self.clone();
        next.set_status(id, status)?;
        Ok(next)
    }

    pub fn to_spec(&self) -> TopologySpec {
        TopologySpec {
            nodes: self
                .nodes
                .values()
                .map(|n| NodeSpec { id: n.id.clone(), cpu: n.cpu_capacity, mem: n.mem_capacity })
                .collect(),
            links: self
                .links
                .values()
                .map(|l| LinkSpec {
                    id: l.id.clone(),
                    a: l.endpoints.0.clone(),
                    b: l.endpoints.1.clone(),
                    bw: l.bandwidth,
                    latency_ms: l.latency_ms,
                })
                .collect(),
        }
    }
}

/// Residual resources per element. Negative values mean oversubscription.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityView {
    pub node_cpu: BTreeMap<String, f64>,
    pub node_mem: BTreeMap<String, f64>,
    pub link_bw: BTreeMap<String, f64>,
    down: BTreeSet<String>,
}

impl CapacityView {
    /// Full capacity on every up element, zero on down ones.
    pub fn pristine(infra: &Infrastructure) -> Self {
        let mut view = CapacityView {
            node_cpu: BTreeMap::new(),
            node_mem: BTreeMap::new(),
            link_bw: BTreeMap::new(),
            down: BTreeSet::new(),
        };
        for n in infra.nodes() {
            let up = n.status == Status::Up;
            if !up {
                view.down.insert(n.id.clone());
            }
            view.node_cpu.insert(n.id.clone(), if up { n.cpu_capacity } else { 0.0 });
            view.node_mem.insert(n.id.clone(), if up { n.mem_capacity } else { 0.0 });
        }
        for l in infra.links() {
            let up = infra.is_link_usable(&l.id);
            if !up {
                view.down.insert(l.id.clone());
            }
            view.link_bw.insert(l.id.clone(), if up { l.bandwidth } else { 0.0 });
        }
        view
    }

    pub fn is_down(&self, id: &str) -> bool {
        self.down.contains(id)
    }

    pub fn cpu(&self, node: &str) -> f64 {
        self.node_cpu.get(node).copied().unwrap_or(0.0)
    }

    pub fn mem(&self, node: &str) -> f64 {
        self.node_mem.get(node).copied().unwrap_or(0.0)
    }

    pub fn bw(&self, link: &str) -> f64 {
        self.link_bw.get(link).copied().unwrap_or(0.0)
    }

    pub fn fits_vnf(&self, node: &str, cpu: f64, mem: f64) -> bool {
        !self.is_down(node)
            && self.node_cpu.contains_key(node)
            && self.cpu(node) + CAPACITY_TOLERANCE >= cpu
            && self.mem(node) + CAPACITY_TOLERANCE >= mem
    }

    pub fn fits_bw(&self, link: &str, bw: f64) -> bool {
        !self.is_down(link) && self.link_bw.contains_key(link) && self.bw(link) + CAPACITY_TOLERANCE >= bw
    }

    /// Signed adjustment; no-op on down elements.
    pub fn adjust_vnf(&mut self, node: &str, cpu: f64, mem: f64) {
        if self.is_down(node) {
            return;
        }
        if let Some(v) = self.node_cpu.get_mut(node) {
            *v += cpu;
        }
        if let Some(v) = self.node_mem.get_mut(node) {
            *v += mem;
        }
    }

    pub fn adjust_path(&mut self, links: &[String], bw: f64) {
        for l in links {
            if self.is_down(l) {
                continue;
            }
            if let Some(v) = self.link_bw.get_mut(l) {
                *v += bw;
            }
        }
    }

    pub fn reserve_deployment(&mut self, d: &Deployment) {
        for (node, cpu, mem) in d.node_loads() {
            self.adjust_vnf(node, -cpu, -mem);
        }
        for (links, bw) in d.route_loads() {
            self.adjust_path(links, -bw);
        }
    }

    pub fn release_deployment(&mut self, d: &Deployment) {
        for (node, cpu, mem) in d.node_loads() {
            self.adjust_vnf(node, cpu, mem);
        }
        for (links, bw) in d.route_loads() {
            self.adjust_path(links, bw);
        }
    }

    /// Elements whose residual is below zero beyond tolerance.
    pub fn oversubscribed(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .node_cpu
            .iter()
            .chain(self.node_mem.iter())
            .chain(self.link_bw.iter())
            .filter(|(_, v)| **v < -CAPACITY_TOLERANCE)
            .map(|(k, _)| k.as_str())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn is_oversubscribed(&self, id: &str) -> bool {
        [self.node_cpu.get(id), self.node_mem.get(id), self.link_bw.get(id)]
            .into_iter()
            .flatten()
            .any(|v| *v < -CAPACITY_TOLERANCE)
    }
}

/// Capacity minus placed demand for every up element; down elements report zero.
/// Oversubscription is not clamped.
pub fn residual_capacity<'a>(
    infra: &Infrastructure,
    deployments: impl IntoIterator<Item = &'a Deployment>,
) -> Result<CapacityView, TopologyError> {
    let mut view = CapacityView::pristine(infra);
    for d in deployments {
        for (node, _, _) in d.node_loads() {
            if infra.node(node).is_none() {
                return Err(TopologyError::InconsistentPlacement {
                    service: d.service_id.clone(),
                    element: node.to_string(),
                });
            }
        }
        for (links, _) in d.route_loads() {
            if let Some(missing) = links.iter().find(|l| infra.link(l).is_none()) {
                return Err(TopologyError::InconsistentPlacement {
                    service: d.service_id.clone(),
                    element: missing.clone(),
                });
            }
        }
        view.reserve_deployment(d);
    }
    Ok(view)
}
