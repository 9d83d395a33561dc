//! Vertical services as ordered families of VNF graphs.
//!
//! Level 0 is the primary graph; each deeper level needs fewer resources and
//! is worth less to the vertical. Graphs of the same service refer to VNFs
//! by stable ids from a shared catalog, so two graphs can share VNFs.

mod sla;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::monitor::AlertRuleSpec;
use crate::time::SimTime;
use crate::topology::is_valid_id;

pub use sla::{sla_allows_downshift, DenyReason, Occupancy, SlaError, SlaState, SlaVerdict, ServiceLedger};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("invalid id {0:?}: ids are non-empty and use only [A-Za-z0-9_.-]")]
    InvalidId(String),
    #[error("vnf {0:?} declared twice in the catalog")]
    DuplicateVnf(String),
    #[error("vnf {vnf:?}: demands must be positive and proc delay non-negative")]
    InvalidDemand { vnf: String },
    #[error("graph at level {level} contains a cycle through {vnf:?}")]
    CyclicGraph { level: usize, vnf: String },
    #[error("graph at level {level} references unknown vnf {vnf:?}")]
    UnknownVnf { level: usize, vnf: String },
    #[error("utility must strictly decrease with level (level {level})")]
    NonMonotoneUtility { level: usize },
    #[error("revenue rate must not increase with level (level {level})")]
    NonMonotoneRevenue { level: usize },
    #[error("no level-0 graph")]
    MissingPrimary,
    #[error("graph levels must be 0..k without gaps or repeats (saw {0:?})")]
    NonConsecutiveLevels(Vec<usize>),
    #[error("graph at level {level}: {reason}")]
    InvalidGraph { level: usize, reason: String },
    #[error("invalid SLA terms: {0}")]
    InvalidSla(String),
    #[error("popularity must be a positive user count")]
    ZeroPopularity,
    #[error("no current level known for same-vertical service {0:?}")]
    UnknownPeer(String),
}

/// Penalty owed when an SLA is violated. `Safety` marks contracts that may
/// only be broken as a last resort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Money(f64),
    Safety,
}

impl Penalty {
    pub fn monetary(self) -> f64 {
        match self {
            Penalty::Money(m) => m,
            Penalty::Safety => 0.0,
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::Money(m) => write!(f, "{m}"),
            Penalty::Safety => f.write_str("SAFETY"),
        }
    }
}

impl Serialize for Penalty {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Penalty::Money(m) => s.serialize_f64(*m),
            Penalty::Safety => s.serialize_str("SAFETY"),
        }
    }
}

impl<'de> Deserialize<'de> for Penalty {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Ok(Penalty::Money(m)),
            Raw::Tag(t) if t == "SAFETY" => Ok(Penalty::Safety),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!(
                "violation_penalty must be a number or \"SAFETY\", got {t:?}"
            ))),
        }
    }
}

// ---- raw schema -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaDoc {
    pub max_secondary_fraction: f64,
    pub window_s: f64,
    pub violation_penalty: Penalty,
    pub outage_penalty_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfDoc {
    pub id: String,
    pub cpu: f64,
    pub mem: f64,
    pub proc_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlinkDoc {
    pub src: String,
    pub dst: String,
    pub bw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDoc {
    pub level: usize,
    pub utility: f64,
    pub revenue_per_h: f64,
    pub kpi_max_delay_ms: f64,
    pub vnfs: Vec<String>,
    #[serde(default)]
    pub vlinks: Vec<VlinkDoc>,
}

/// A service entry of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDoc {
    pub id: String,
    pub vertical: String,
    pub priority: i64,
    pub popularity: u64,
    pub sla: SlaDoc,
    pub vnfs: Vec<VnfDoc>,
    pub graphs: Vec<GraphDoc>,
    #[serde(default)]
    pub alert_rules: Vec<AlertRuleSpec>,
}

// ---- validated model -----------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct VnfDescriptor {
    pub vnf_id: String,
    pub cpu_demand: f64,
    pub mem_demand: f64,
    pub proc_delay_ms: f64,
}

/// Directed virtual link between two VNFs of the same graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VLinkKey {
    pub src: String,
    pub dst: String,
}

impl VLinkKey {
    pub fn new(src: impl Into<String>, dst: impl Into<String>) -> Self {
        VLinkKey { src: src.into(), dst: dst.into() }
    }
}

impl fmt::Display for VLinkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}>{}", self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VnfGraph {
    pub level: usize,
    pub utility: f64,
    /// Money per hour while this graph serves.
    pub revenue_rate: f64,
    pub vnfs: BTreeSet<String>,
    /// Virtual links with their bandwidth demand in Mbps.
    pub vlinks: BTreeMap<VLinkKey, f64>,
    pub kpi_max_delay_ms: f64,
    topo_order: Vec<String>,
}

impl VnfGraph {
    /// VNFs in a deterministic topological order (ties by id).
    pub fn topo_order(&self) -> &[String] {
        &self.topo_order
    }

    pub fn predecessors<'a>(&'a self, vnf: &'a str) -> impl Iterator<Item = (&'a VLinkKey, f64)> + 'a {
        self.vlinks.iter().filter(move |(k, _)| k.dst == vnf).map(|(k, bw)| (k, *bw))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaTerms {
    /// Higher is more important; only compared within a vertical.
    pub priority: i64,
    pub max_secondary_fraction: f64,
    pub window: SimTime,
    pub violation_penalty: Penalty,
    /// Money per second of outage.
    pub outage_penalty_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSpec {
    pub service_id: String,
    pub vertical_id: String,
    pub popularity: u64,
    pub catalog: BTreeMap<String, VnfDescriptor>,
    /// Indexed by level.
    pub graphs: Vec<VnfGraph>,
    pub sla: SlaTerms,
}

impl ServiceSpec {
    pub fn graph(&self, level: usize) -> Option<&VnfGraph> {
        self.graphs.get(level)
    }

    pub fn deepest_level(&self) -> usize {
        self.graphs.len() - 1
    }

    pub fn revenue_rate(&self, level: usize) -> f64 {
        self.graphs[level].revenue_rate
    }

    pub fn vnf(&self, id: &str) -> &VnfDescriptor {
        &self.catalog[id]
    }

    /// Inverse of [`validate_service`], without alert rules.
    pub fn to_doc(&self) -> ServiceDoc {
        ServiceDoc {
            id: self.service_id.clone(),
            vertical: self.vertical_id.clone(),
            priority: self.sla.priority,
            popularity: self.popularity,
            sla: SlaDoc {
                max_secondary_fraction: self.sla.max_secondary_fraction,
                window_s: self.sla.window.as_secs_f64(),
                violation_penalty: self.sla.violation_penalty,
                outage_penalty_rate: self.sla.outage_penalty_rate,
            },
            vnfs: self
                .catalog
                .values()
                .map(|v| VnfDoc {
                    id: v.vnf_id.clone(),
                    cpu: v.cpu_demand,
                    mem: v.mem_demand,
                    proc_ms: v.proc_delay_ms,
                })
                .collect(),
            graphs: self
                .graphs
                .iter()
                .map(|g| GraphDoc {
                    level: g.level,
                    utility: g.utility,
                    revenue_per_h: g.revenue_rate,
                    kpi_max_delay_ms: g.kpi_max_delay_ms,
                    vnfs: g.vnfs.iter().cloned().collect(),
                    vlinks: g
                        .vlinks
                        .iter()
                        .map(|(k, bw)| VlinkDoc { src: k.src.clone(), dst: k.dst.clone(), bw: *bw })
                        .collect(),
                })
                .collect(),
            alert_rules: Vec::new(),
        }
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Kahn's algorithm with lexicographic tie-breaking. On a cycle, returns a
/// VNF that lies on or behind it.
fn topological_order(vnfs: &BTreeSet<String>, vlinks: &BTreeMap<VLinkKey, f64>) -> Result<Vec<String>, String> {
    let mut indegree: BTreeMap<&str, usize> = vnfs.iter().map(|v| (v.as_str(), 0)).collect();
    for k in vlinks.keys() {
        *indegree.get_mut(k.dst.as_str()).expect("endpoints checked") += 1;
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(v, _)| *v).collect();
    let mut order = Vec::with_capacity(vnfs.len());
    while let Some(v) = ready.pop_first() {
        order.push(v.to_string());
        for k in vlinks.keys().filter(|k| k.src == v) {
            let d = indegree.get_mut(k.dst.as_str()).expect("endpoints checked");
            *d -= 1;
            if *d == 0 {
                ready.insert(k.dst.as_str());
            }
        }
    }
    if order.len() != vnfs.len() {
        let stuck = indegree.iter().find(|(_, d)| **d > 0).map(|(v, _)| v.to_string()).unwrap_or_default();
        return Err(stuck);
    }
    Ok(order)
}

/// Checks every service invariant and sorts the graph family by level.
pub fn validate_service(doc: &ServiceDoc) -> Result<ServiceSpec, ServiceError> {
    for id in [&doc.id, &doc.vertical] {
        if !is_valid_id(id) {
            return Err(ServiceError::InvalidId(id.clone()));
        }
    }
    if doc.popularity == 0 {
        return Err(ServiceError::ZeroPopularity);
    }

    let sla = &doc.sla;
    if !(sla.window_s.is_finite() && sla.window_s > 0.0) {
        return Err(ServiceError::InvalidSla("window_s must be positive".into()));
    }
    if !(0.0..=1.0).contains(&sla.max_secondary_fraction) {
        return Err(ServiceError::InvalidSla("max_secondary_fraction must lie in [0, 1]".into()));
    }
    if let Penalty::Money(m) = sla.violation_penalty {
        if !finite_nonneg(m) {
            return Err(ServiceError::InvalidSla("violation_penalty must be non-negative".into()));
        }
    }
    if !finite_nonneg(sla.outage_penalty_rate) {
        return Err(ServiceError::InvalidSla("outage_penalty_rate must be non-negative".into()));
    }
    let window = SimTime::from_secs_f64(sla.window_s);
    if window == SimTime::ZERO {
        return Err(ServiceError::InvalidSla("window_s rounds to zero milliseconds".into()));
    }

    let mut catalog = BTreeMap::new();
    for v in &doc.vnfs {
        if !is_valid_id(&v.id) {
            return Err(ServiceError::InvalidId(v.id.clone()));
        }
        let ok = v.cpu.is_finite() && v.cpu > 0.0 && v.mem.is_finite() && v.mem > 0.0 && finite_nonneg(v.proc_ms);
        if !ok {
            return Err(ServiceError::InvalidDemand { vnf: v.id.clone() });
        }
        let prev = catalog.insert(
            v.id.clone(),
            VnfDescriptor { vnf_id: v.id.clone(), cpu_demand: v.cpu, mem_demand: v.mem, proc_delay_ms: v.proc_ms },
        );
        if prev.is_some() {
            return Err(ServiceError::DuplicateVnf(v.id.clone()));
        }
    }

    let mut docs: Vec<&GraphDoc> = doc.graphs.iter().collect();
    docs.sort_by_key(|g| g.level);
    if docs.first().map(|g| g.level) != Some(0) {
        return Err(ServiceError::MissingPrimary);
    }
    if docs.iter().enumerate().any(|(i, g)| g.level != i) {
        return Err(ServiceError::NonConsecutiveLevels(docs.iter().map(|g| g.level).collect()));
    }

    let mut graphs: Vec<VnfGraph> = Vec::with_capacity(docs.len());
    for g in docs {
        let level = g.level;
        let bad = |reason: &str| ServiceError::InvalidGraph { level, reason: reason.to_string() };
        if g.vnfs.is_empty() {
            return Err(bad("graph has no VNFs"));
        }
        if !(g.utility.is_finite() && g.utility > 0.0) {
            return Err(bad("utility must be positive"));
        }
        if !finite_nonneg(g.revenue_per_h) {
            return Err(bad("revenue_per_h must be non-negative"));
        }
        if !(g.kpi_max_delay_ms.is_finite() && g.kpi_max_delay_ms > 0.0) {
            return Err(bad("kpi_max_delay_ms must be positive"));
        }
        let mut vnfs = BTreeSet::new();
        for v in &g.vnfs {
            if !catalog.contains_key(v) {
                return Err(ServiceError::UnknownVnf { level, vnf: v.clone() });
            }
            if !vnfs.insert(v.clone()) {
                return Err(bad(&format!("vnf {v:?} listed twice")));
            }
        }
        let mut vlinks = BTreeMap::new();
        for l in &g.vlinks {
            for end in [&l.src, &l.dst] {
                if !vnfs.contains(end) {
                    return Err(ServiceError::UnknownVnf { level, vnf: end.clone() });
                }
            }
            if !finite_nonneg(l.bw) {
                return Err(bad("vlink bandwidth must be non-negative"));
            }
            if vlinks.insert(VLinkKey::new(&l.src, &l.dst), l.bw).is_some() {
                return Err(bad(&format!("vlink {}>{} listed twice", l.src, l.dst)));
            }
        }
        let topo_order = topological_order(&vnfs, &vlinks).map_err(|vnf| ServiceError::CyclicGraph { level, vnf })?;
        if let Some(prev) = graphs.last() {
            if g.utility >= prev.utility {
                return Err(ServiceError::NonMonotoneUtility { level });
            }
            if g.revenue_per_h > prev.revenue_rate {
                return Err(ServiceError::NonMonotoneRevenue { level });
            }
        }
        graphs.push(VnfGraph {
            level,
            utility: g.utility,
            revenue_rate: g.revenue_per_h,
            vnfs,
            vlinks,
            kpi_max_delay_ms: g.kpi_max_delay_ms,
            topo_order,
        });
    }

    Ok(ServiceSpec {
        service_id: doc.id.clone(),
        vertical_id: doc.vertical.clone(),
        popularity: doc.popularity,
        catalog,
        graphs,
        sla: SlaTerms {
            priority: doc.priority,
            max_secondary_fraction: sla.max_secondary_fraction,
            window,
            violation_penalty: sla.violation_penalty,
            outage_penalty_rate: sla.outage_penalty_rate,
        },
    })
}

/// VNF ids present in both graphs.
pub fn shared_vnfs(a: &VnfGraph, b: &VnfGraph) -> BTreeSet<String> {
    a.vnfs.intersection(&b.vnfs).cloned().collect()
}
