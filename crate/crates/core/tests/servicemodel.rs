mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use shiftsim::scenario::parse_scenario;
use shiftsim::servicemodel::{
    shared_vnfs, sla_allows_downshift, validate_service, DenyReason, Occupancy, ServiceDoc, ServiceError, ServiceSpec,
    SlaError, SlaState, SlaVerdict,
};
use shiftsim::time::SimTime;

use common::{service, service_doc};

const DWELL: SimTime = SimTime(120_000);

fn secs(s: u64) -> SimTime {
    SimTime::from_secs(s)
}

fn with_sla(id: &str, vertical: &str, priority: i64, fraction: f64, window_s: u64) -> ServiceSpec {
    let mut doc = service_doc(id, &[("a", 1.0, 1.0), ("b", 1.0, 1.0)], &[(&["a"], &[], 2.0, 100.0), (&["b"], &[], 1.0, 100.0)]);
    doc["vertical"] = vertical.into();
    doc["priority"] = priority.into();
    doc["sla"]["max_secondary_fraction"] = fraction.into();
    doc["sla"]["window_s"] = window_s.into();
    service(doc)
}

fn validate(doc: serde_json::Value) -> Result<ServiceSpec, ServiceError> {
    validate_service(&serde_json::from_value::<ServiceDoc>(doc).unwrap())
}

#[test]
fn sensor_graphs_share_three_vnfs() {
    let sc = parse_scenario(&common::fixture("sensor_monitoring.json")).unwrap();
    let s = sc.service("sensors").unwrap();
    let shared = shared_vnfs(&s.graphs[0], &s.graphs[1]);
    assert_eq!(shared.len(), 3);
    assert!(!shared.contains("predictor"));
}

#[test]
fn see_through_graphs_are_disjoint() {
    let sc = parse_scenario(&common::fixture("see_through.json")).unwrap();
    let s = sc.service("seethrough").unwrap();
    assert!(shared_vnfs(&s.graphs[0], &s.graphs[1]).is_empty());
}

#[test]
fn shared_vnfs_examples() {
    let s = service(service_doc(
        "s",
        &[("A", 1.0, 1.0), ("B", 1.0, 1.0), ("C", 1.0, 1.0), ("D", 1.0, 1.0)],
        &[(&["A", "B", "C"], &[], 2.0, 100.0), (&["A", "D"], &[], 1.0, 100.0)],
    ));
    assert_eq!(shared_vnfs(&s.graphs[0], &s.graphs[1]), BTreeSet::from(["A".to_string()]));
    assert_eq!(shared_vnfs(&s.graphs[0], &s.graphs[0]), s.graphs[0].vnfs);
}

#[test]
fn invalid_services_are_rejected() {
    let mut cyclic = service_doc("s", &[("alarm", 1.0, 1.0)], &[(&["alarm"], &[("alarm", "alarm", 1.0)], 1.0, 100.0)]);
    assert!(matches!(validate(cyclic.clone()), Err(ServiceError::CyclicGraph { .. })));
    cyclic["graphs"][0]["vlinks"] = serde_json::json!([]);
    assert!(validate(cyclic).is_ok());

    let mut rising = service_doc("s", &[("a", 1.0, 1.0), ("b", 1.0, 1.0)], &[(&["a"], &[], 2.0, 100.0), (&["b"], &[], 1.0, 100.0)]);
    rising["graphs"][0]["utility"] = 5.0.into();
    rising["graphs"][1]["utility"] = 7.0.into();
    assert_eq!(validate(rising).unwrap_err(), ServiceError::NonMonotoneUtility { level: 1 });

    let unknown = service_doc("s", &[("a", 1.0, 1.0)], &[(&["a", "ghost"], &[], 1.0, 100.0)]);
    assert!(matches!(validate(unknown), Err(ServiceError::UnknownVnf { .. })));

    let mut no_primary = service_doc("s", &[("a", 1.0, 1.0)], &[(&["a"], &[], 1.0, 100.0)]);
    no_primary["graphs"][0]["level"] = 1.into();
    assert_eq!(validate(no_primary).unwrap_err(), ServiceError::MissingPrimary);
}

#[test]
fn downshift_examples() {
    let s = with_sla("s", "v", 2, 1.0, 3600);
    let low = with_sla("low", "v", 1, 1.0, 3600);
    let services = BTreeMap::from([("s".to_string(), s.clone()), ("low".to_string(), low)]);
    let mut st = SlaState::new();
    st.register("s", secs(3600));
    st.register("low", secs(3600));
    let levels = |l: usize| BTreeMap::from([("s".to_string(), 0), ("low".to_string(), l)]);

    assert_eq!(sla_allows_downshift(&s, &st, secs(10), &services, &levels(1), DWELL).unwrap(), SlaVerdict::Allow);
    assert_eq!(
        sla_allows_downshift(&s, &st, secs(10), &services, &levels(0), DWELL).unwrap(),
        SlaVerdict::Deny(DenyReason::PriorityOrder { blocking: "low".into() })
    );
    let missing = BTreeMap::from([("s".to_string(), 0)]);
    assert_eq!(
        sla_allows_downshift(&s, &st, secs(10), &services, &missing, DWELL).unwrap_err(),
        ServiceError::UnknownPeer("low".into())
    );
}

#[test]
fn dwell_pushes_a_nearly_spent_budget_over() {
    let s = with_sla("s", "v", 1, 0.25, 3600);
    let services = BTreeMap::from([("s".to_string(), s.clone())]);
    let levels = BTreeMap::from([("s".to_string(), 0)]);
    let mut st = SlaState::new();
    st.register("s", secs(3600));
    st.record_interval("s", Occupancy::Level(1), secs(0), secs(800)).unwrap();
    st.record_interval("s", Occupancy::Level(0), secs(800), secs(1000)).unwrap();
    // 800 + 120 = 920 > 900
    assert_eq!(
        sla_allows_downshift(&s, &st, secs(1000), &services, &levels, DWELL).unwrap(),
        SlaVerdict::Deny(DenyReason::FractionBudget)
    );
    // with 780 s used the dwell fits exactly
    let mut st = SlaState::new();
    st.register("s", secs(3600));
    st.record_interval("s", Occupancy::Level(1), secs(0), secs(780)).unwrap();
    assert!(sla_allows_downshift(&s, &st, secs(1000), &services, &levels, DWELL).unwrap().is_allow());
}

/// Secondary seconds of `intervals` inside `[now - window, now]`, by explicit clipping.
fn clipped(intervals: &[(u64, u64, usize)], now: u64, window: u64) -> u64 {
    let lo = now.saturating_sub(window);
    intervals
        .iter()
        .filter(|iv| iv.2 > 0)
        .map(|&(a, b, _)| {
            let (a, b) = (a.max(lo), b.min(now));
            b.saturating_sub(a)
        })
        .sum()
}

#[test]
fn old_intervals_leave_the_window() {
    let mut st = SlaState::new();
    st.register("s", secs(1000));
    st.record_interval("s", Occupancy::Level(1), secs(0), secs(300)).unwrap();
    let got = st.ledger("s").unwrap().secondary_millis(secs(1200));
    assert_eq!(got, clipped(&[(0, 300_000, 1)], 1_200_000, 1_000_000));
    assert_eq!(got, 100_000);
}

#[test]
fn interval_errors() {
    let mut st = SlaState::new();
    assert_eq!(
        st.record_interval("x", Occupancy::Level(1), secs(0), secs(1)).unwrap_err(),
        SlaError::UnknownService("x".into())
    );
    st.register("s", secs(1000));
    st.record_interval("s", Occupancy::Level(1), secs(0), secs(100)).unwrap();
    assert!(matches!(
        st.record_interval("s", Occupancy::Level(1), secs(50), secs(120)),
        Err(SlaError::OverlappingInterval { .. })
    ));
    assert!(matches!(
        st.record_interval("s", Occupancy::Level(1), secs(300), secs(200)),
        Err(SlaError::NegativeInterval { .. })
    ));
}

proptest! {
    #[test]
    fn accumulator_matches_clipping(
        steps in prop::collection::vec((0u64..500_000, 1u64..500_000, 0usize..3, any::<bool>()), 1..25),
        window in 1u64..2_000_000,
        probe in 0u64..1_000_000,
    ) {
        let mut st = SlaState::new();
        st.register("s", SimTime::from_millis(window));
        let mut t = 0;
        let mut ivs = Vec::new();
        for (gap, len, level, outage) in steps {
            let a = t + gap;
            let b = a + len;
            let occ = if outage { Occupancy::Outage } else { Occupancy::Level(level) };
            st.record_interval("s", occ, SimTime::from_millis(a), SimTime::from_millis(b)).unwrap();
            ivs.push((a, b, if outage { 0 } else { level }));
            t = b;
        }
        let now = t + probe;
        prop_assert_eq!(st.ledger("s").unwrap().secondary_millis(SimTime::from_millis(now)), clipped(&ivs, now, window));
    }

    #[test]
    fn a_looser_budget_never_denies_more(
        used in 0u64..3600,
        lo in 0.0f64..1.0,
        extra in 0.0f64..1.0,
    ) {
        let hi = (lo + extra).min(1.0);
        let verdict = |fraction: f64| {
            let s = with_sla("s", "v", 1, fraction, 3600);
            let services = BTreeMap::from([("s".to_string(), s.clone())]);
            let mut st = SlaState::new();
            st.register("s", secs(3600));
            st.record_interval("s", Occupancy::Level(1), secs(0), secs(used)).unwrap();
            sla_allows_downshift(&s, &st, secs(3600), &services, &BTreeMap::from([("s".to_string(), 0)]), DWELL).unwrap()
        };
        if verdict(lo).is_allow() {
            prop_assert!(verdict(hi).is_allow());
        }
    }

    #[test]
    fn shared_vnfs_is_symmetric(a in prop::collection::btree_set(0u8..8, 1..6), b in prop::collection::btree_set(0u8..8, 1..6)) {
        let names: Vec<String> = (0..8).map(|i| format!("v{i}")).collect();
        let vnfs: Vec<(&str, f64, f64)> = names.iter().map(|n| (n.as_str(), 1.0, 1.0)).collect();
        let ga: Vec<&str> = a.iter().map(|i| names[*i as usize].as_str()).collect();
        let gb: Vec<&str> = b.iter().map(|i| names[*i as usize].as_str()).collect();
        let s = service(service_doc("s", &vnfs, &[(&ga, &[], 2.0, 100.0), (&gb, &[], 1.0, 100.0)]));
        let (x, y) = (&s.graphs[0], &s.graphs[1]);
        let ab = shared_vnfs(x, y);
        prop_assert_eq!(&ab, &shared_vnfs(y, x));
        prop_assert_eq!(&ab, &shared_vnfs(x, y));
        let want: BTreeSet<String> = a.intersection(&b).map(|i| names[*i as usize].clone()).collect();
        prop_assert_eq!(ab, want);
    }
}
