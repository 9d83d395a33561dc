//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use common::{close, fixture, fuzz_scenario, items, pairs, read_doc, DocFacts, Replay, Shape, FIXTURES};
use shiftsim::cli::{events_log, summary_json, timeseries_csv, RunSummary};
use shiftsim::decision::{resolve_ripple, Policy, PolicyConfig, World};
use shiftsim::placement::{exhaustive_oracle_with_load, Deployment, Placement};
use shiftsim::report::LogRecord;
use shiftsim::scenario::{parse_scenario, parse_scenario_str, Scenario, ScenarioEvent};
use shiftsim::servicemodel::{Occupancy, ServiceSpec, VLinkKey};
use shiftsim::simengine::{run, sample_delay, DelayConfig, DelayKind, EngineConfig, RngState, RunOutput, Simulation};
use shiftsim::topology::{build_infrastructure, Status, TopologySpec};

const SHIFTING: [Policy; 3] = [Policy::Payoff, Policy::Qoe, Policy::Reaction];
const MIN_DWELL_MS: u64 = 120_000;

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 migration delay sampling", delay_sampling),
        ("2 shifting beats scaling on the see-through scenario", shifting_beats_scaling),
        ("3 recovery whenever the oracle can deploy everything", recovery_matches_oracle),
        ("4 logged shift-down choices follow the policy", shift_down_audit),
        ("5 SLA priority, budget and violation choice", sla_audit),
        ("6 sensor shift removes only the predictor", sensor_plan),
        ("7 time conservation and determinism", conservation_and_determinism),
        ("8 ripple migrations are minimal", ripple_minimality),
    ];
    // `cargo test --test acceptance -- 3 5` runs a subset
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.split(' ').next() == Some(o.as_str())) {
            continue;
        }
        let started = Instant::now();
        match f() {
            Ok(msg) => println!("PASS {name}: {msg} ({:.2} s)", started.elapsed().as_secs_f64()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn load(name: &str) -> Scenario {
    parse_scenario(&fixture(name)).expect("fixtures parse")
}

fn delay_sampling() -> Outcome {
    let cfg = DelayConfig::default();
    let mut rng = RngState::new(42);
    let started = Instant::now();
    let draws: Vec<f64> = (0..10_000).map(|_| sample_delay(DelayKind::VmMigrate, &cfg, &mut rng)).collect();
    let elapsed = started.elapsed().as_secs_f64();
    let min = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure(min >= 50.0 && max <= 270.0, || format!("draws outside [50, 270]: min {min}, max {max}"))?;
    ensure(min <= 52.0 && max >= 268.0, || format!("range not covered: min {min}, max {max}"))?;
    ensure(elapsed < 1.0, || format!("10000 draws took {elapsed:.3} s"))?;
    Ok(format!("min {min:.2} s, max {max:.2} s, {:.1} ms for 10000 draws", elapsed * 1e3))
}

fn shifting_beats_scaling() -> Outcome {
    let sc = load("see_through.json");
    let mut notes = Vec::new();
    for seed in 1..=3 {
        let base = run(&sc, seed, PolicyConfig::new(Policy::ScaleOnly)).map_err(|e| e.to_string())?.report;
        for p in SHIFTING {
            let r = run(&sc, seed, PolicyConfig::new(p)).map_err(|e| e.to_string())?.report;
            ensure(r.kpi_violation_s < base.kpi_violation_s, || {
                format!("seed {seed} {p}: kpi violation {} s not below scale_only {} s", r.kpi_violation_s, base.kpi_violation_s)
            })?;
            ensure(r.total_revenue > base.total_revenue, || {
                format!("seed {seed} {p}: revenue {} not above scale_only {}", r.total_revenue, base.total_revenue)
            })?;
            if seed == 1 {
                notes.push(format!("{p} {:.0} s/{:.2}", r.kpi_violation_s, r.total_revenue));
            }
        }
        if seed == 1 {
            notes.push(format!("scale_only {:.0} s/{:.2}", base.kpi_violation_s, base.total_revenue));
        }
    }
    Ok(format!("seeds 1-3; seed 1 kpi violation/revenue: {}", notes.join(", ")))
}

fn recovery_matches_oracle() -> Outcome {
    let shape = Shape::SMALL;
    let mut instances = 0;
    let mut applicable = 0;
    let mut seed = 3000;
    while instances < 50 {
        seed += 1;
        let (doc, sc) = fuzz_scenario(seed, shape);
        let Some(ev) = sc.events.first() else { continue };
        let mut infra = sc.infrastructure.clone();
        let mut loads = BTreeMap::new();
        match &ev.event {
            ScenarioEvent::Fail { element } => infra.set_status(element, Status::Down).unwrap(),
            ScenarioEvent::LoadChange { service, factor } => {
                loads.insert(service.clone(), *factor);
            }
            ScenarioEvent::Recover { .. } => unreachable!("no recoveries in this shape"),
        }
        let Ok(best) = exhaustive_oracle_with_load(&sc.services, &loads, &infra) else { continue };
        instances += 1;
        if !best.all_deployed() {
            continue;
        }
        applicable += 1;
        let mut sim = Simulation::new(&sc, 1, EngineConfig::new(PolicyConfig::new(Policy::Payoff))).unwrap();
        let mut recovered = false;
        while !sim.is_finished() {
            sim.step().map_err(|e| e.to_string())?;
            if sim.now() >= ev.at
                && sim.is_at_rest()
                && sc.services.iter().all(|s| sim.occupancy(&s.service_id) != Some(Occupancy::Outage))
            {
                recovered = true;
            }
        }
        ensure(recovered, || {
            format!(
                "instance {seed}: oracle deploys all services {:?} but the run never settles without outage\n{doc}",
                best.choices.iter().map(|(s, c)| (s, c.as_ref().map(|p| p.graph_level))).collect::<Vec<_>>()
            )
        })?;
    }
    Ok(format!("{instances} instances, {applicable} with every service deployable after the shortage, all recovered"))
}

fn corpus_runs(target_decisions: usize) -> Vec<(Value, Scenario, Policy, RunOutput)> {
    let mut out = Vec::new();
    let mut decisions = 0;
    let mut seed = 10_000;
    while decisions < target_decisions {
        seed += 1;
        let (doc, sc) = fuzz_scenario(seed, Shape::BUSY);
        for p in SHIFTING {
            let o = run(&sc, seed, PolicyConfig::new(p)).expect("fuzz runs complete");
            decisions += o.log.iter().filter(|r| r.kind == "shift_down" && r.get("candidates") != Some("-")).count();
            out.push((doc.clone(), sc.clone(), p, o));
        }
    }
    out
}

/// Checks every policy-selected shift-down of one run; returns how many.
fn audit_run(doc: &Value, sc: &Scenario, policy: Policy, log: &[LogRecord]) -> Result<usize, String> {
    let facts = DocFacts::new(doc);
    let mut replay = Replay::default();
    let mut audited = 0;
    for (i, r) in log.iter().enumerate() {
        if r.kind == "shift_down" && r.get("candidates") != Some("-") {
            let at = format!("t={} {}", r.t, r);
            let logged: Vec<(String, f64)> =
                pairs(r.get("candidates").unwrap()).into_iter().map(|(s, k)| (s, k.parse().unwrap())).collect();
            // keys recomputed from the scenario (payoff, qoe) or the plan record (reaction)
            let mut keys: Vec<(String, f64)> = Vec::new();
            for (s, k) in &logged {
                let key = match policy {
                    Policy::Payoff => {
                        let from = replay.levels[s];
                        facts.revenue[s][from] - facts.revenue[s][from + 1]
                    }
                    Policy::Qoe => facts.popularity[s],
                    _ => *k,
                };
                ensure(close(key, *k), || format!("{at}: logged key {k} for {s}, expected {key}"))?;
                keys.push((s.clone(), key));
            }
            let min = keys.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
            let expected = keys.iter().filter(|k| k.1 == min).map(|k| &k.0).min().unwrap();
            ensure(*expected == r.subject, || format!("{at}: expected {expected} (key {min})"))?;
            let key: f64 = r.get("key").unwrap().parse().unwrap();
            ensure(close(key, min), || format!("{at}: chosen key {key} is not the minimum {min}"))?;
            if policy == Policy::Reaction {
                let plan = log[i..]
                    .iter()
                    .find(|p| p.kind == "plan" && p.get("service") == Some(&r.subject))
                    .ok_or_else(|| format!("{at}: no plan record"))?;
                let counted: usize = ["removals", "instantiations", "relocations", "route_removals", "route_additions", "migrations"]
                    .iter()
                    .map(|f| items(plan.get(f).unwrap()).len())
                    .sum();
                ensure(counted as f64 == key && plan.get("ops") == Some(&counted.to_string()), || {
                    format!("{at}: plan lists count {counted} operations, key {key}, {plan}")
                })?;
            }
            // candidates are exactly the SLA-permitted ones
            for (s, _) in &logged {
                let v = replay.verdict(sc, s, r.t.as_millis(), MIN_DWELL_MS);
                ensure(v == "allow", || format!("{at}: candidate {s} should be {v}"))?;
            }
            for (s, why) in pairs(r.get("excluded").unwrap()) {
                if why.starts_with("denied") {
                    let v = replay.verdict(sc, &s, r.t.as_millis(), MIN_DWELL_MS);
                    ensure(v == why, || format!("{at}: {s} excluded as {why}, expected {v}"))?;
                }
            }
            audited += 1;
        }
        replay.apply(r);
    }
    Ok(audited)
}

fn shift_down_audit() -> Outcome {
    let runs = corpus_runs(1000);
    let mut audited = 0;
    let mut per_policy = BTreeMap::new();
    for (doc, sc, p, o) in &runs {
        let n = audit_run(doc, sc, *p, &o.log)?;
        audited += n;
        *per_policy.entry(p.as_str()).or_insert(0) += n;
    }
    ensure(audited >= 1000, || format!("only {audited} decisions audited"))?;
    Ok(format!("{audited} decisions from {} runs {per_policy:?}", runs.len()))
}

/// Independent choice of the SLA to break.
fn cheapest(denied: &[(String, Option<f64>)]) -> String {
    let mut money: Vec<(&String, f64)> = denied.iter().filter_map(|(s, p)| p.map(|m| (s, m))).collect();
    money.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(b.0)));
    match money.first() {
        Some((s, _)) => (*s).clone(),
        None => denied.iter().map(|d| &d.0).min().unwrap().clone(),
    }
}

#[derive(Default)]
struct SlaTally {
    runs: usize,
    violations: usize,
    overruns: usize,
    over_budget_explained: usize,
}

fn audit_sla(doc: &Value, sc: &Scenario, o: &RunOutput, tally: &mut SlaTally) -> Result<(), String> {
    let facts = DocFacts::new(doc);
    let mut replay = Replay::default();
    let mut explained: BTreeSet<String> = BTreeSet::new();
    let mut breached: BTreeSet<String> = BTreeSet::new();
    let log = &o.log;
    for (i, r) in log.iter().enumerate() {
        if r.kind == "sla_violation" || r.kind == "sla_overrun" {
            let at = format!("t={} {}", r.t, r);
            let denied: Vec<(String, Option<f64>)> = pairs(r.get("denied").unwrap())
                .into_iter()
                .map(|(s, p)| (s, if p == "SAFETY" { None } else { Some(p.parse().unwrap()) }))
                .collect();
            for (s, p) in &denied {
                let listed = facts.penalty[s];
                ensure(p.is_none() == listed.is_none() && p.zip(listed).map_or(true, |(a, b)| close(a, b)), || {
                    format!("{at}: penalty of {s} misreported")
                })?;
            }
            let expected = cheapest(&denied);
            ensure(expected == r.subject, || format!("{at}: cheapest SLA to break is {expected}"))?;
            // the others were genuinely denied; on the budget path the
            // overrunning service itself is listed last
            let budget_path = r.kind == "sla_overrun"
                || log[i + 1..].iter().find(|n| n.kind == "shift_down").is_some_and(|n| n.get("reason") == Some("budget_swap"));
            let checked = if budget_path { denied.len() - 1 } else { denied.len() };
            for (s, _) in &denied[..checked] {
                let v = replay.verdict(sc, s, r.t.as_millis(), MIN_DWELL_MS);
                ensure(v != "allow", || format!("{at}: {s} was not denied"))?;
            }
            breached.insert(r.subject.clone());
            if r.kind == "sla_violation" {
                tally.violations += 1;
                explained.insert(r.subject.clone());
            } else {
                tally.overruns += 1;
            }
        }
        replay.apply(r);
        if r.kind == "level" && r.get("level") == Some("0") {
            explained.remove(&r.subject);
        }
        let last_at_t = log.get(i + 1).map_or(true, |n| n.t != r.t);
        if last_at_t {
            for hi in &sc.services {
                for lo in &sc.services {
                    if hi.vertical_id == lo.vertical_id
                        && hi.sla.priority > lo.sla.priority
                        && replay.levels[&hi.service_id] > 0
                        && replay.levels[&lo.service_id] == 0
                    {
                        ensure(explained.contains(&hi.service_id), || {
                            format!("t={}: {} secondary while lower-priority {} is primary", r.t, hi.service_id, lo.service_id)
                        })?;
                    }
                }
            }
        }
    }
    for s in &o.report.services {
        let spec = sc.service(&s.id).unwrap();
        let slack = MIN_DWELL_MS as f64 / spec.sla.window.as_millis() as f64;
        if s.secondary_fraction > spec.sla.max_secondary_fraction + slack + 1e-9 {
            ensure(breached.contains(&s.id), || {
                format!("{}: secondary fraction {} above {} + {slack} with no logged violation", s.id, s.secondary_fraction, spec.sla.max_secondary_fraction)
            })?;
            tally.over_budget_explained += 1;
        }
    }
    tally.runs += 1;
    Ok(())
}

fn sla_audit() -> Outcome {
    let mut tally = SlaTally::default();
    for name in FIXTURES {
        let doc = read_doc(&fixture(name));
        let sc = load(name);
        for p in SHIFTING {
            let o = run(&sc, 1, PolicyConfig::new(p)).map_err(|e| e.to_string())?;
            audit_sla(&doc, &sc, &o, &mut tally).map_err(|e| format!("{name} {p}: {e}"))?;
        }
    }
    for seed in 20_001..=20_150 {
        let (doc, sc) = fuzz_scenario(seed, Shape::BUSY);
        for p in SHIFTING {
            let o = run(&sc, seed, PolicyConfig::new(p)).map_err(|e| e.to_string())?;
            audit_sla(&doc, &sc, &o, &mut tally).map_err(|e| format!("fuzz {seed} {p}: {e}"))?;
        }
    }
    Ok(format!(
        "{} runs, {} logged violations, {} logged overruns, {} over-budget services each with a logged breach",
        tally.runs, tally.violations, tally.overruns, tally.over_budget_explained
    ))
}

fn sensor_plan() -> Outcome {
    let doc = read_doc(&fixture("sensor_monitoring.json"));
    let sc = load("sensor_monitoring.json");
    let o = run(&sc, 1, PolicyConfig::new(Policy::Payoff)).map_err(|e| e.to_string())?;
    let plan = o
        .log
        .iter()
        .find(|r| r.kind == "plan" && r.get("label") == Some("shift_down"))
        .ok_or("no shift-down plan in the run")?;
    // graph-diff oracle straight from the document
    let sensors = doc["services"].as_array().unwrap().iter().find(|s| s["id"] == "sensors").unwrap();
    let graph = |level: usize| {
        let g = &sensors["graphs"][level];
        let vnfs: BTreeSet<String> = g["vnfs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
        let links: BTreeSet<(String, String)> = g["vlinks"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| (l["src"].as_str().unwrap().to_string(), l["dst"].as_str().unwrap().to_string()))
            .collect();
        (vnfs, links)
    };
    let (v0, e0) = graph(0);
    let (v1, e1) = graph(1);
    let removed: Vec<String> = v0.difference(&v1).cloned().collect();
    let oracle_ops = removed.len() + v1.difference(&v0).count() + e0.difference(&e1).count() + e1.difference(&e0).count();
    ensure(items(plan.get("removals").unwrap()) == removed, || format!("removals differ: {plan}"))?;
    ensure(items(plan.get("instantiations").unwrap()).is_empty(), || format!("instantiations: {plan}"))?;
    ensure(items(plan.get("migrations").unwrap()).is_empty(), || format!("ripple migrations: {plan}"))?;
    ensure(items(plan.get("relocations").unwrap()).is_empty(), || format!("relocations: {plan}"))?;
    ensure(plan.get("ops") == Some(&oracle_ops.to_string()), || format!("ops differ from oracle {oracle_ops}: {plan}"))?;
    Ok(format!("removed {removed:?}, {oracle_ops} operations, no instantiation or migration"))
}

fn conservation_and_determinism() -> Outcome {
    let mut runs = 0;
    for name in FIXTURES {
        let sc = load(name);
        for p in Policy::ALL {
            for seed in 1..=3 {
                let a = run(&sc, seed, PolicyConfig::new(p)).map_err(|e| e.to_string())?;
                let b = run(&sc, seed, PolicyConfig::new(p)).map_err(|e| e.to_string())?;
                let render = |o: &RunOutput| {
                    let s = RunSummary::new(name, seed, p, o);
                    (events_log(o), timeseries_csv(o), summary_json(&s))
                };
                ensure(render(&a) == render(&b), || format!("{name} {p} seed {seed}: repeated run differs"))?;
                let total = sc.duration.as_millis();
                for s in &a.report.services {
                    ensure(s.accounted_ms() == total, || {
                        format!("{name} {p} seed {seed}: {} accounts {} ms of {total}", s.id, s.accounted_ms())
                    })?;
                }
                // and again from the state records alone
                let mut replay = Replay::default();
                a.log.iter().for_each(|r| replay.apply(r));
                for s in &sc.services {
                    let id = &s.service_id;
                    let closed: u64 = replay.closed.get(id).into_iter().flatten().map(|iv| iv.1 - iv.0).sum();
                    let open = total - replay.open[id].0;
                    ensure(closed + open == total, || format!("{name} {p} seed {seed}: state records of {id} do not tile the run"))?;
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs, every service accounted for the full duration, repeats byte-identical"))
}

struct RippleCase {
    infra: shiftsim::topology::Infrastructure,
    services: BTreeMap<String, ServiceSpec>,
    deployments: BTreeMap<String, Deployment>,
}

fn link_id(a: &str, b: &str) -> String {
    if a < b {
        format!("{a}-{b}")
    } else {
        format!("{b}-{a}")
    }
}

fn ripple_case(rng: &mut ChaCha8Rng) -> Option<RippleCase> {
    let n = rng.gen_range(2..=4);
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let mut links = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            links.push(json!({ "id": link_id(&nodes[i], &nodes[j]), "a": nodes[i], "b": nodes[j], "bw": 100000, "latency_ms": 1 }));
        }
    }
    let node_docs: Vec<Value> = nodes.iter().map(|id| json!({ "id": id, "cpu": rng.gen_range(4..=8), "mem": 64 })).collect();
    let spec: TopologySpec = serde_json::from_value(json!({ "nodes": node_docs, "links": links })).unwrap();
    let infra = build_infrastructure(&spec).unwrap();

    let mut svc_docs = Vec::new();
    let mut left = rng.gen_range(1..=5);
    let mut fi = 0;
    while left > 0 {
        let k = rng.gen_range(1..=left.min(2));
        left -= k;
        let sid = format!("f{fi}");
        fi += 1;
        let vnfs: Vec<Value> =
            (0..k).map(|v| json!({ "id": format!("{sid}-v{v}"), "cpu": rng.gen_range(1..=4), "mem": 1, "proc_ms": 1 })).collect();
        let names: Vec<String> = (0..k).map(|v| format!("{sid}-v{v}")).collect();
        let vlinks: Vec<Value> = names.windows(2).map(|w| json!({ "src": w[0], "dst": w[1], "bw": 1 })).collect();
        svc_docs.push(json!({
            "id": sid, "vertical": "x", "priority": 1, "popularity": 1,
            "sla": { "max_secondary_fraction": 1.0, "window_s": 3600, "violation_penalty": 1, "outage_penalty_rate": 0.1 },
            "vnfs": vnfs,
            "graphs": [{ "level": 0, "utility": 1, "revenue_per_h": 1, "kpi_max_delay_ms": 1000, "vnfs": names, "vlinks": vlinks }]
        }));
    }
    let heavy: Vec<String> = (0..rng.gen_range(1..=3)).map(|v| format!("t-h{v}")).collect();
    let mut tvnfs: Vec<Value> =
        heavy.iter().map(|v| json!({ "id": v, "cpu": rng.gen_range(2..=5), "mem": 1, "proc_ms": 1 })).collect();
    tvnfs.push(json!({ "id": "t-lite", "cpu": 1, "mem": 1, "proc_ms": 1 }));
    let hlinks: Vec<Value> = heavy.windows(2).map(|w| json!({ "src": w[0], "dst": w[1], "bw": 1 })).collect();
    svc_docs.push(json!({
        "id": "t", "vertical": "y", "priority": 1, "popularity": 1,
        "sla": { "max_secondary_fraction": 1.0, "window_s": 3600, "violation_penalty": 1, "outage_penalty_rate": 0.1 },
        "vnfs": tvnfs,
        "graphs": [
            { "level": 0, "utility": 1, "revenue_per_h": 2, "kpi_max_delay_ms": 1000, "vnfs": heavy, "vlinks": hlinks },
            { "level": 1, "utility": 0.5, "revenue_per_h": 1, "kpi_max_delay_ms": 1000, "vnfs": ["t-lite"] }
        ]
    }));
    let doc = json!({ "infrastructure": spec, "services": svc_docs, "duration_s": 1 });
    let sc = parse_scenario_str(&doc.to_string(), Path::new("ripple.json")).unwrap();
    let services: BTreeMap<String, ServiceSpec> = sc.services.iter().map(|s| (s.service_id.clone(), s.clone())).collect();

    // random packing of the current deployments
    let mut cpu: BTreeMap<String, f64> = infra.nodes().map(|n| (n.id.clone(), n.cpu_capacity)).collect();
    let mut deployments = BTreeMap::new();
    for (sid, s) in &services {
        let level = if sid == "t" { 1 } else { 0 };
        let g = &s.graphs[level];
        let mut vnf_map = BTreeMap::new();
        for v in &g.vnfs {
            let need = s.catalog[v].cpu_demand;
            let fits: Vec<String> = cpu.iter().filter(|(_, c)| **c >= need).map(|(n, _)| n.clone()).collect();
            if fits.is_empty() {
                return None;
            }
            let node = fits[rng.gen_range(0..fits.len())].clone();
            *cpu.get_mut(&node).unwrap() -= need;
            vnf_map.insert(v.clone(), node);
        }
        let route_map: BTreeMap<VLinkKey, Vec<String>> = g
            .vlinks
            .keys()
            .map(|k| {
                let (a, b) = (&vnf_map[&k.src], &vnf_map[&k.dst]);
                (k.clone(), if a == b { Vec::new() } else { vec![link_id(a, b)] })
            })
            .collect();
        let placement = Placement { graph_level: level, vnf_map, route_map };
        deployments.insert(sid.clone(), Deployment::new(s, placement, 1.0, 1.0));
    }
    Some(RippleCase { infra, services, deployments })
}

/// Fewest foreign VNF moves after which the heavy graph fits, by brute force
/// over subsets and node assignments (cpu and memory only; links are ample).
fn ripple_oracle(case: &RippleCase) -> Option<usize> {
    let nodes: Vec<&str> = case.infra.nodes().map(|n| n.id.as_str()).collect();
    let cap: BTreeMap<&str, (f64, f64)> = case.infra.nodes().map(|n| (n.id.as_str(), (n.cpu_capacity, n.mem_capacity))).collect();
    let mut foreign: Vec<(&str, f64, f64)> = Vec::new(); // (node, cpu, mem)
    for (sid, d) in &case.deployments {
        if sid == "t" {
            continue;
        }
        for (v, n) in &d.placement.vnf_map {
            foreign.push((n.as_str(), d.vnf_demand[v].cpu, d.vnf_demand[v].mem));
        }
    }
    let t = &case.services["t"];
    let target: Vec<(f64, f64)> = t.graphs[0].vnfs.iter().map(|v| (t.catalog[v].cpu_demand, t.catalog[v].mem_demand)).collect();
    let fits = |assign_moved: &[usize], moved: &[usize], assign_t: &[usize]| -> bool {
        let mut used: BTreeMap<&str, (f64, f64)> = nodes.iter().map(|n| (*n, (0.0, 0.0))).collect();
        for (i, f) in foreign.iter().enumerate() {
            let node = match moved.iter().position(|m| *m == i) {
                Some(p) => nodes[assign_moved[p]],
                None => f.0,
            };
            let u = used.get_mut(node).unwrap();
            u.0 += f.1;
            u.1 += f.2;
        }
        for (i, d) in target.iter().enumerate() {
            let u = used.get_mut(nodes[assign_t[i]]).unwrap();
            u.0 += d.0;
            u.1 += d.1;
        }
        used.iter().all(|(n, u)| u.0 <= cap[n].0 + 1e-9 && u.1 <= cap[n].1 + 1e-9)
    };
    // odometer over assignments
    fn each_assignment(len: usize, base: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        let mut cur = vec![0; len];
        loop {
            if f(&cur) {
                return true;
            }
            let mut i = 0;
            while i < len {
                cur[i] += 1;
                if cur[i] < base {
                    break;
                }
                cur[i] = 0;
                i += 1;
            }
            if i == len {
                return false;
            }
        }
    }
    let nf = foreign.len();
    for k in 0..=nf {
        for mask in 0u32..(1 << nf) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let moved: Vec<usize> = (0..nf).filter(|i| mask & (1 << i) != 0).collect();
            let found = each_assignment(k, nodes.len(), &mut |am| {
                // a migration goes somewhere else
                if moved.iter().zip(am).any(|(m, a)| nodes[*a] == foreign[*m].0) {
                    return false;
                }
                each_assignment(target.len(), nodes.len(), &mut |at| fits(am, &moved, at))
            });
            if found {
                return Some(k);
            }
        }
    }
    None
}

fn ripple_minimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = 0;
    let mut with_moves = 0;
    let mut impossible = 0;
    while cases < 300 {
        let Some(case) = ripple_case(&mut rng) else { continue };
        cases += 1;
        let loads = BTreeMap::new();
        let world = World {
            infra: &case.infra,
            services: &case.services,
            loads: &loads,
            deployments: case.deployments.clone(),
            in_flight: BTreeSet::new(),
        };
        let expected = ripple_oracle(&case);
        let got = resolve_ripple(&world, "t", 0, 5).ok().map(|p| p.ripple_migrations.len());
        ensure(got == expected, || {
            format!("case {cases}: ripple found {got:?} migrations, oracle {expected:?}; deployments {:?}", case.deployments)
        })?;
        match expected {
            Some(k) if k > 0 => with_moves += 1,
            None => impossible += 1,
            _ => {}
        }
    }
    Ok(format!("{cases} instances ({with_moves} needing migrations, {impossible} infeasible) match the exhaustive minimum"))
}
