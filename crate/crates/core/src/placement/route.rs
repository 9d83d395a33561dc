use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use super::Infeasible;
use crate::topology::{CapacityView, Infrastructure, CAPACITY_TOLERANCE};

/// Path label ordered by latency, then hop count, then the link id sequence.
#[derive(Debug, Clone)]
struct Label {
    latency: f64,
    node: String,
    path: Vec<String>,
}

fn cmp_labels(a: &Label, b: &Label) -> Ordering {
    if (a.latency - b.latency).abs() > CAPACITY_TOLERANCE {
        return a.latency.total_cmp(&b.latency);
    }
    a.path.len().cmp(&b.path.len()).then_with(|| a.path.cmp(&b.path))
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        cmp_labels(self, other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_labels(other, self)
    }
}

/// Minimum-latency path over usable links with at least `bw` residual
/// bandwidth. Ties go to fewer hops, then to the lexicographically smaller
/// sequence of link ids. Returns an empty path when `src == dst`.
pub fn route_vlink(
    infra: &Infrastructure,
    residual: &CapacityView,
    src: &str,
    dst: &str,
    bw: f64,
) -> Result<Vec<String>, Infeasible> {
    if src == dst {
        return Ok(Vec::new());
    }
    let no_path = || Infeasible::NoPath { src: src.to_string(), dst: dst.to_string() };
    if !infra.is_node_up(src) || !infra.is_node_up(dst) {
        return Err(no_path());
    }
    let mut settled: BTreeSet<String> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label { latency: 0.0, node: src.to_string(), path: Vec::new() });
    while let Some(label) = heap.pop() {
        if !settled.insert(label.node.clone()) {
            continue;
        }
        if label.node == dst {
            return Ok(label.path);
        }
        for link in infra.incident_links(&label.node) {
            if !infra.is_link_usable(&link.id) || !residual.fits_bw(&link.id, bw) {
                continue;
            }
            let next = link.other_end(&label.node).expect("incident link");
            if settled.contains(next) {
                continue;
            }
            let mut path = label.path.clone();
            path.push(link.id.clone());
            heap.push(Label { latency: label.latency + link.latency_ms, node: next.to_string(), path });
        }
    }
    Err(no_path())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_infrastructure, LinkSpec, NodeSpec, TopologySpec};

    fn link(id: &str, a: &str, b: &str, bw: f64, lat: f64) -> LinkSpec {
        LinkSpec { id: id.into(), a: a.into(), b: b.into(), bw, latency_ms: lat }
    }

    fn nodes(ids: &[&str]) -> Vec<NodeSpec> {
        ids.iter().map(|i| NodeSpec { id: i.to_string(), cpu: 4.0, mem: 4.0 }).collect()
    }

    #[test]
    fn same_node_is_empty_path() {
        let infra = build_infrastructure(&TopologySpec { nodes: nodes(&["a"]), links: vec![] }).unwrap();
        let view = CapacityView::pristine(&infra);
        assert_eq!(route_vlink(&infra, &view, "a", "a", 10.0).unwrap(), Vec::<String>::new());
    }

    #[test]
    fn picks_lower_latency_parallel_path() {
        let infra = build_infrastructure(&TopologySpec {
            nodes: nodes(&["a", "b", "m1", "m2"]),
            links: vec![
                link("slow1", "a", "m1", 100.0, 6.0),
                link("slow2", "m1", "b", 100.0, 6.0),
                link("fast1", "a", "m2", 100.0, 2.5),
                link("fast2", "m2", "b", 100.0, 2.5),
            ],
        })
        .unwrap();
        let view = CapacityView::pristine(&infra);
        assert_eq!(route_vlink(&infra, &view, "a", "b", 10.0).unwrap(), vec!["fast1", "fast2"]);
    }

    #[test]
    fn latency_tie_prefers_fewer_hops_then_ids() {
        let infra = build_infrastructure(&TopologySpec {
            nodes: nodes(&["a", "b", "m"]),
            links: vec![link("z", "a", "b", 100.0, 4.0), link("x", "a", "m", 100.0, 2.0), link("y", "m", "b", 100.0, 2.0)],
        })
        .unwrap();
        let view = CapacityView::pristine(&infra);
        assert_eq!(route_vlink(&infra, &view, "a", "b", 1.0).unwrap(), vec!["z"]);

        let infra = build_infrastructure(&TopologySpec {
            nodes: nodes(&["a", "b"]),
            links: vec![link("q", "a", "b", 100.0, 3.0), link("p", "a", "b", 100.0, 3.0)],
        })
        .unwrap();
        let view = CapacityView::pristine(&infra);
        assert_eq!(route_vlink(&infra, &view, "a", "b", 1.0).unwrap(), vec!["p"]);
    }

    #[test]
    fn no_bandwidth_no_path() {
        let infra = build_infrastructure(&TopologySpec {
            nodes: nodes(&["a", "b"]),
            links: vec![link("l", "a", "b", 5.0, 1.0)],
        })
        .unwrap();
        let view = CapacityView::pristine(&infra);
        assert!(route_vlink(&infra, &view, "a", "b", 6.0).is_err());
    }
}
