//! Deterministic discrete-event simulation of a shifting-capable orchestrator.
//!
//! The loop injects scripted shortage events, samples ground truth into the
//! monitor, runs decision epochs and enacts transition plans with sampled
//! delays, accounting every millisecond of every service as either time at
//! some graph level or outage.

mod delay;
mod metrics;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::decision::{
    count_reconfig_ops, run_epoch, schedule, ActionKind, ActionLabel, DecisionState, EpochOutcome, Orchestrator,
    PolicyConfig, ServiceView, TransitionPlan, World,
};
use crate::monitor::{dispatch, Alert, Direction, MetricSample, MonitorState, SourceKind, Subscription};
use crate::placement::{evaluate_kpis, place_graph, Deployment, Pinning};
use crate::report::{fmt_sig6, LogRecord};
use crate::scenario::{Scenario, ScenarioEvent};
use crate::servicemodel::{Occupancy, ServiceSpec, SlaState};
use crate::time::SimTime;
use crate::topology::{residual_capacity, CapacityView, Infrastructure, Status, CAPACITY_TOLERANCE};

pub use delay::{sample_delay, DelayConfig, DelayKind, InvalidDelayRange, RngState};
pub use metrics::{peak_secondary_fraction, MetricsReport, ServiceReport};

/// Event kinds in tie-break order: at equal timestamps, infrastructure and
/// load changes are handled first, then completions, then observation and
/// decisions, and the end marker last.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    ElementFail(String),
    ElementRecover(String),
    LoadChange { service: String, factor: f64 },
    EnactmentComplete { plan: u64, action: usize },
    MetricTick { periodic: bool },
    DecisionEpoch { periodic: bool },
    End,
}

impl EventKind {
    pub fn rank(&self) -> u8 {
        match self {
            EventKind::ElementFail(_) => 0,
            EventKind::ElementRecover(_) => 1,
            EventKind::LoadChange { .. } => 2,
            EventKind::EnactmentComplete { .. } => 3,
            EventKind::MetricTick { .. } => 4,
            EventKind::DecisionEpoch { .. } => 5,
            EventKind::End => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub at: SimTime,
    pub kind: EventKind,
}

/// Min-queue ordered by (time, kind rank, insertion order).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(SimTime, u8, u64)>>,
    events: BTreeMap<u64, SimEvent>,
    seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, event: SimEvent) {
        let key = (event.at, event.kind.rank(), self.seq);
        self.events.insert(self.seq, event);
        self.heap.push(Reverse(key));
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let Reverse((_, _, seq)) = self.heap.pop()?;
        self.events.remove(&seq)
    }

    pub fn peek(&self) -> Option<&SimEvent> {
        self.heap.peek().map(|Reverse((_, _, seq))| &self.events[seq])
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SimEvent> {
        self.events.values()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event queue is empty")]
    EmptyQueue,
    #[error("primary graph of service {0:?} cannot be placed on the pristine infrastructure")]
    ScenarioInfeasibleAtStart(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub policy: PolicyConfig,
    pub epoch_period: SimTime,
    /// Half-width of uniform additive noise on finite metric samples.
    pub metric_noise: f64,
}

impl EngineConfig {
    pub fn new(policy: PolicyConfig) -> Self {
        EngineConfig { policy, epoch_period: SimTime::from_secs(30), metric_noise: 0.0 }
    }
}

/// One `timeseries.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub t: SimTime,
    pub service: String,
    pub level: usize,
    pub outage: bool,
    pub node_util_max: f64,
    pub link_util_max: f64,
}

impl TimeseriesRow {
    pub const HEADER: &'static str = "t,service,level,outage,node_util_max,link_util_max";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.t,
            self.service,
            self.level,
            u8::from(self.outage),
            fmt_sig6(self.node_util_max),
            fmt_sig6(self.link_util_max)
        )
    }
}

#[derive(Debug, Clone)]
struct ActivePlan {
    plan: TransitionPlan,
    started: SimTime,
    pending: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Track {
    occ: Occupancy,
    kpi_ok: bool,
    since: SimTime,
}

#[derive(Debug, Clone, Default)]
struct Account {
    level_ms: Vec<u64>,
    outage_ms: u64,
    kpi_violation_ms: u64,
    violation_penalties: f64,
    violations: u32,
    intervals: Vec<(SimTime, SimTime, Occupancy)>,
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub log: Vec<LogRecord>,
    pub timeseries: Vec<TimeseriesRow>,
}

pub struct Simulation {
    cfg: EngineConfig,
    duration: SimTime,
    sampling_period: SimTime,
    delays: DelayConfig,
    infra: Infrastructure,
    services: BTreeMap<String, ServiceSpec>,
    loads: BTreeMap<String, f64>,
    deployments: BTreeMap<String, Deployment>,
    monitor: MonitorState,
    subscriptions: Vec<Subscription>,
    active_alerts: BTreeMap<(String, String), Alert>,
    sla: SlaState,
    decision: DecisionState,
    rng: RngState,
    noise_rng: RngState,
    queue: EventQueue,
    plans: BTreeMap<u64, ActivePlan>,
    next_plan: u64,
    migrating: BTreeMap<String, usize>,
    tracks: BTreeMap<String, Track>,
    accounts: BTreeMap<String, Account>,
    log: Vec<LogRecord>,
    timeseries: Vec<TimeseriesRow>,
    reconfig_ops: usize,
    now: SimTime,
    /// An element or load changed since the last metric tick.
    unobserved: bool,
    finished: bool,
}

impl Simulation {
    /// Places every primary graph on the pristine infrastructure and seeds
    /// the queue with the scripted events, the periodic ticks and epochs,
    /// and the end marker.
    pub fn new(scenario: &Scenario, seed: u64, cfg: EngineConfig) -> Result<Self, SimError> {
        let services: BTreeMap<String, ServiceSpec> =
            scenario.services.iter().map(|s| (s.service_id.clone(), s.clone())).collect();
        let monitor = MonitorState::new(scenario.all_rules()).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let subscriptions = monitor.rules().iter().flat_map(|r| r.subscriptions().collect::<Vec<_>>()).collect();
        let infra = scenario.infrastructure.clone();
        let mut sim = Simulation {
            cfg,
            duration: scenario.duration,
            sampling_period: scenario.sampling_period,
            delays: scenario.delays,
            infra,
            loads: services.keys().map(|s| (s.clone(), 1.0)).collect(),
            services,
            deployments: BTreeMap::new(),
            monitor,
            subscriptions,
            active_alerts: BTreeMap::new(),
            sla: SlaState::new(),
            decision: DecisionState::default(),
            rng: RngState::new(seed),
            noise_rng: RngState::new(seed ^ 0x5DEE_CE66_D1CE_5EED),
            queue: EventQueue::default(),
            plans: BTreeMap::new(),
            next_plan: 1,
            migrating: BTreeMap::new(),
            tracks: BTreeMap::new(),
            accounts: BTreeMap::new(),
            log: Vec::new(),
            timeseries: Vec::new(),
            reconfig_ops: 0,
            now: SimTime::ZERO,
            unobserved: false,
            finished: false,
        };
        sim.deploy_primaries()?;
        for e in &scenario.events {
            let kind = match &e.event {
                ScenarioEvent::Fail { element } => EventKind::ElementFail(element.clone()),
                ScenarioEvent::Recover { element } => EventKind::ElementRecover(element.clone()),
                ScenarioEvent::LoadChange { service, factor } => {
                    EventKind::LoadChange { service: service.clone(), factor: *factor }
                }
            };
            if e.at <= sim.duration {
                sim.queue.push(SimEvent { at: e.at, kind });
            }
        }
        sim.queue.push(SimEvent { at: SimTime::ZERO, kind: EventKind::MetricTick { periodic: true } });
        sim.queue.push(SimEvent { at: SimTime::ZERO, kind: EventKind::DecisionEpoch { periodic: true } });
        sim.queue.push(SimEvent { at: sim.duration, kind: EventKind::End });
        Ok(sim)
    }

    fn deploy_primaries(&mut self) -> Result<(), SimError> {
        let mut residual = CapacityView::pristine(&self.infra);
        for (sid, spec) in &self.services {
            let g = &spec.graphs[0];
            let placement = place_graph(g, &spec.catalog, &self.infra, &residual, &Pinning::default(), 1.0)
                .map_err(|_| SimError::ScenarioInfeasibleAtStart(sid.clone()))?;
            let kpi = evaluate_kpis(&placement, g, &spec.catalog, &self.infra)
                .map_err(|_| SimError::ScenarioInfeasibleAtStart(sid.clone()))?;
            if !kpi.satisfied {
                return Err(SimError::ScenarioInfeasibleAtStart(sid.clone()));
            }
            let d = Deployment::new(spec, placement, 1.0, 1.0);
            residual.reserve_deployment(&d);
            self.deployments.insert(sid.clone(), d);
        }
        for (sid, spec) in &self.services {
            self.sla.register(sid, spec.sla.window);
            self.sla.begin(sid, Occupancy::Level(0), SimTime::ZERO).expect("registered");
            self.tracks.insert(sid.clone(), Track { occ: Occupancy::Level(0), kpi_ok: true, since: SimTime::ZERO });
            self.accounts.insert(sid.clone(), Account { level_ms: vec![0; spec.graphs.len()], ..Account::default() });
            let d = &self.deployments[sid];
            let nodes: Vec<String> = d.placement.vnf_map.iter().map(|(v, n)| format!("{v}@{n}")).collect();
            self.log.push(
                LogRecord::new(SimTime::ZERO, "deploy", sid).with("level", 0).with("vnfs", nodes.join("|")),
            );
            self.log.push(LogRecord::new(SimTime::ZERO, "level", sid).with("level", 0));
            self.log.push(LogRecord::new(SimTime::ZERO, "state", sid).with("occ", "level0").with("kpi", "ok"));
        }
        Ok(())
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn queue(&self) -> &EventQueue {
        &self.queue
    }

    pub fn infrastructure(&self) -> &Infrastructure {
        &self.infra
    }

    pub fn deployments(&self) -> &BTreeMap<String, Deployment> {
        &self.deployments
    }

    pub fn sla_state(&self) -> &SlaState {
        &self.sla
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    pub fn occupancy(&self, service: &str) -> Option<Occupancy> {
        self.tracks.get(service).map(|t| t.occ)
    }

    /// True when nothing is being enacted, the monitor has seen the latest
    /// element and load changes, no alert is raised and no rule is part-way
    /// through its sustain count.
    pub fn is_at_rest(&self) -> bool {
        !self.unobserved
            && self.plans.is_empty()
            && self.active_alerts.is_empty()
            && self.monitor.raised().is_empty()
            && !self.monitor.detection_pending()
    }

    pub fn services_in_transition(&self) -> BTreeSet<String> {
        self.plans.values().map(|p| p.plan.service_id.clone()).collect()
    }

    fn busy_services(&self) -> BTreeSet<String> {
        self.plans
            .values()
            .flat_map(|p| std::iter::once(p.plan.service_id.clone()).chain(p.plan.ripple_placements.keys().cloned()))
            .collect()
    }

    /// Handles the earliest event.
    pub fn step(&mut self) -> Result<SimEvent, SimError> {
        let event = self.queue.pop().ok_or(SimError::EmptyQueue)?;
        self.now = event.at;
        match &event.kind {
            EventKind::ElementFail(id) => self.set_status(id, Status::Down),
            EventKind::ElementRecover(id) => self.set_status(id, Status::Up),
            EventKind::LoadChange { service, factor } => {
                self.loads.insert(service.clone(), *factor);
                self.unobserved = true;
                let spec = &self.services[service];
                let d = &self.deployments[service];
                let nd = Deployment::new(spec, d.placement.clone(), *factor, d.scale);
                self.deployments.insert(service.clone(), nd);
                self.log.push(LogRecord::new(self.now, "load_change", service).with("factor", fmt_sig6(*factor)));
            }
            EventKind::EnactmentComplete { plan, action } => self.complete_action(*plan, *action),
            EventKind::MetricTick { periodic } => {
                self.metric_tick();
                self.unobserved = false;
                if *periodic && self.now + self.sampling_period < self.duration {
                    self.queue.push(SimEvent { at: self.now + self.sampling_period, kind: EventKind::MetricTick { periodic: true } });
                }
            }
            EventKind::DecisionEpoch { periodic } => {
                self.decision_epoch();
                if *periodic && self.now + self.cfg.epoch_period < self.duration {
                    self.queue.push(SimEvent {
                        at: self.now + self.cfg.epoch_period,
                        kind: EventKind::DecisionEpoch { periodic: true },
                    });
                }
            }
            EventKind::End => {
                self.log.push(LogRecord::new(self.now, "end", ""));
                self.finished = true;
            }
        }
        self.refresh_occupancy();
        if self.finished {
            self.close_accounts();
        }
        Ok(event)
    }

    fn set_status(&mut self, id: &str, status: Status) {
        self.infra.set_status(id, status).expect("scenario events reference known elements");
        self.unobserved = true;
        let kind = if status == Status::Down { "fail" } else { "recover" };
        self.log.push(LogRecord::new(self.now, kind, id));
        self.queue.push(SimEvent { at: self.now, kind: EventKind::MetricTick { periodic: false } });
    }

    fn complete_action(&mut self, plan_id: u64, action: usize) {
        let Some(active) = self.plans.get_mut(&plan_id) else { return };
        active.pending.remove(&action);
        let a = &active.plan.timeline[action];
        self.log.push(
            LogRecord::new(self.now, "enact", &plan_id.to_string())
                .with("action", a.kind.as_str())
                .with("target", &a.target)
                .with("duration", a.duration),
        );
        if a.kind == ActionKind::Migrate {
            let svc = a.target.split(':').next().unwrap_or_default().to_string();
            if let Some(n) = self.migrating.get_mut(&svc) {
                *n -= 1;
                if *n == 0 {
                    self.migrating.remove(&svc);
                }
            }
        }
        if active.pending.is_empty() {
            self.finish_plan(plan_id);
        }
    }

    fn finish_plan(&mut self, plan_id: u64) {
        let active = self.plans.remove(&plan_id).expect("active plan");
        let sid = &active.plan.service_id;
        self.sla.set_level(sid, active.plan.to_level, self.now).expect("registered");
        self.log.push(
            LogRecord::new(self.now, "plan_done", &plan_id.to_string())
                .with("service", sid)
                .with("level", active.plan.to_level)
                .with("elapsed", self.now - active.started),
        );
    }

    fn node_usage(&self) -> (BTreeMap<&str, (f64, f64)>, BTreeMap<&str, f64>) {
        let mut nodes: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        let mut links: BTreeMap<&str, f64> = BTreeMap::new();
        for d in self.deployments.values() {
            for (n, cpu, mem) in d.node_loads() {
                let e = nodes.entry(n).or_default();
                e.0 += cpu;
                e.1 += mem;
            }
            for (path, bw) in d.route_loads() {
                for l in path {
                    *links.entry(l.as_str()).or_default() += bw;
                }
            }
        }
        (nodes, links)
    }

    fn utilisation(used: f64, cap: f64, usable: bool) -> f64 {
        if usable {
            used / cap
        } else if used > CAPACITY_TOLERANCE {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Ratio of end-to-end delay to the KPI bound; infinite while the
    /// service is mid-transition or its placement is infeasible.
    fn delay_ratio(&self, sid: &str, in_transition: &BTreeSet<String>, infeasible: &BTreeSet<String>) -> f64 {
        if in_transition.contains(sid) || infeasible.contains(sid) {
            return f64::INFINITY;
        }
        let d = &self.deployments[sid];
        let spec = &self.services[sid];
        let g = &spec.graphs[d.level()];
        match evaluate_kpis(&d.placement, g, &spec.catalog, &self.infra) {
            Ok(k) => k.end_to_end_delay_ms / g.kpi_max_delay_ms / d.scale,
            Err(_) => f64::INFINITY,
        }
    }

    fn infeasible_services(&self) -> BTreeSet<String> {
        let report = crate::placement::check_feasible(self.deployments.values(), &self.infra);
        self.deployments.values().filter(|d| report.touches(d)).map(|d| d.service_id.clone()).collect()
    }

    fn noisy(&mut self, v: f64) -> f64 {
        if self.cfg.metric_noise > 0.0 && v.is_finite() {
            v + (self.noise_rng.next_f64() * 2.0 - 1.0) * self.cfg.metric_noise
        } else {
            v
        }
    }

    fn metric_tick(&mut self) {
        let now = self.now;
        let (node_use, link_use) = self.node_usage();
        let mut samples = Vec::new();
        let mut node_util: BTreeMap<String, f64> = BTreeMap::new();
        let mut link_util: BTreeMap<String, f64> = BTreeMap::new();
        for n in self.infra.nodes() {
            let (cpu, mem) = node_use.get(n.id.as_str()).copied().unwrap_or_default();
            let up = self.infra.is_node_up(&n.id);
            let cu = Self::utilisation(cpu, n.cpu_capacity, up);
            let mu = Self::utilisation(mem, n.mem_capacity, up);
            node_util.insert(n.id.clone(), cu.max(mu));
            samples.push((SourceKind::NodeCpu, n.id.clone(), cu));
            samples.push((SourceKind::NodeMem, n.id.clone(), mu));
        }
        for l in self.infra.links() {
            let bw = link_use.get(l.id.as_str()).copied().unwrap_or_default();
            let u = Self::utilisation(bw, l.bandwidth, self.infra.is_link_usable(&l.id));
            link_util.insert(l.id.clone(), u);
            samples.push((SourceKind::LinkUtil, l.id.clone(), u));
        }
        let in_transition = self.services_in_transition();
        let infeasible = self.infeasible_services();
        for sid in self.services.keys() {
            samples.push((SourceKind::ServiceDelay, sid.clone(), self.delay_ratio(sid, &in_transition, &infeasible)));
            samples.push((SourceKind::AppCustom, sid.clone(), self.loads[sid]));
        }
        for (source, subject, value) in samples {
            let value = self.noisy(value);
            self.monitor
                .ingest_sample(MetricSample { source, subject, value, timestamp: now })
                .expect("ticks move forward in time");
        }

        let alerts = self.monitor.evaluate_rules(now);
        let deliveries = dispatch(&alerts, &self.subscriptions);
        let mut raised_delivered = false;
        for a in &alerts {
            let to: Vec<&str> =
                deliveries.iter().filter(|(_, d)| d == a).map(|(c, _)| c.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
            self.log.push(
                LogRecord::new(now, "alert", &a.rule_id)
                    .with("subject", &a.subject_id)
                    .with("source", a.source.as_str())
                    .with("direction", a.direction.as_str())
                    .with("value", fmt_sig6(a.value))
                    .with("to", if to.is_empty() { "-".to_string() } else { to.join("|") }),
            );
            let key = (a.rule_id.clone(), a.subject_id.clone());
            match a.direction {
                Direction::Raised if !to.is_empty() => {
                    raised_delivered = true;
                    self.active_alerts.insert(key, a.clone());
                }
                Direction::Raised => {}
                Direction::Cleared => {
                    self.active_alerts.remove(&key);
                }
            }
        }
        if raised_delivered {
            let already = self
                .queue
                .iter()
                .any(|e| e.at == now && matches!(e.kind, EventKind::DecisionEpoch { .. }));
            if !already {
                self.queue.push(SimEvent { at: now, kind: EventKind::DecisionEpoch { periodic: false } });
            }
        }

        for (sid, d) in &self.deployments {
            let node_max = d.nodes().iter().map(|n| node_util[*n]).fold(0.0, f64::max);
            let link_max = d.links().iter().map(|l| link_util[*l]).fold(0.0, f64::max);
            let track = self.tracks[sid];
            self.timeseries.push(TimeseriesRow {
                t: now,
                service: sid.clone(),
                level: d.level(),
                outage: track.occ == Occupancy::Outage,
                node_util_max: node_max,
                link_util_max: link_max,
            });
        }
    }

    fn decision_epoch(&mut self) {
        let busy = self.busy_services();
        let world = World {
            infra: &self.infra,
            services: &self.services,
            loads: &self.loads,
            deployments: self.deployments.clone(),
            in_flight: busy.clone(),
        };
        let rl = Orchestrator::new(world, self.cfg.policy.ripple_depth_limit);
        let view = ServiceView {
            now: self.now,
            services: &self.services,
            levels: self.deployments.iter().map(|(s, d)| (s.clone(), d.level())).collect(),
            scales: self.deployments.iter().map(|(s, d)| (s.clone(), d.scale)).collect(),
            sla: &self.sla,
            in_flight: &busy,
        };
        let alerts: Vec<Alert> = self.active_alerts.values().cloned().collect();
        let mut state = std::mem::take(&mut self.decision);
        let outcome: EpochOutcome = run_epoch(&self.cfg.policy, &view, &rl, &alerts, &mut state);
        self.decision = state;

        for note in &outcome.notes {
            let mut r = LogRecord::new(self.now, note.kind, &note.subject);
            for (k, v) in &note.detail {
                r = r.with(k, v);
            }
            self.log.push(r);
        }
        for (sid, amount) in &outcome.penalties {
            let acc = self.accounts.get_mut(sid).expect("known service");
            acc.violation_penalties += amount;
            acc.violations += 1;
        }
        for action in outcome.actions {
            self.start_plan(action.label, action.plan);
        }
    }

    fn start_plan(&mut self, label: ActionLabel, mut plan: TransitionPlan) {
        let id = self.next_plan;
        self.next_plan += 1;
        schedule(&mut plan, &self.delays, &mut self.rng);
        let ops = count_reconfig_ops(&plan);
        self.reconfig_ops += ops;
        let join = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join("|") };
        self.log.push(
            LogRecord::new(self.now, "plan", &id.to_string())
                .with("service", &plan.service_id)
                .with("label", label.as_str())
                .with("from", plan.from_level)
                .with("to", plan.to_level)
                .with("scale", fmt_sig6(plan.scale))
                .with("ops", ops)
                .with("removals", join(plan.removals.iter().cloned().collect()))
                .with("instantiations", join(plan.instantiations.iter().map(|(v, n)| format!("{v}@{n}")).collect()))
                .with(
                    "relocations",
                    join(plan.relocations.iter().map(|r| format!("{}@{}>{}", r.vnf, r.from, r.to)).collect()),
                )
                .with("route_removals", join(plan.route_removals.keys().map(|k| k.to_string()).collect()))
                .with("route_additions", join(plan.route_additions.keys().map(|k| k.to_string()).collect()))
                .with(
                    "migrations",
                    join(
                        plan.ripple_migrations
                            .iter()
                            .map(|m| format!("{}:{}@{}>{}", m.service, m.vnf, m.from, m.to))
                            .collect(),
                    ),
                )
                .with("duration", plan.duration()),
        );

        let old_level = self.deployments[&plan.service_id].level();
        let spec = &self.services[&plan.service_id];
        let load = self.loads[&plan.service_id];
        self.deployments
            .insert(plan.service_id.clone(), Deployment::new(spec, plan.target.clone(), load, plan.scale));
        for (svc, placement) in &plan.ripple_placements {
            let scale = self.deployments[svc].scale;
            let d = Deployment::new(&self.services[svc], placement.clone(), self.loads[svc], scale);
            self.deployments.insert(svc.clone(), d);
        }
        for m in &plan.ripple_migrations {
            *self.migrating.entry(m.service.clone()).or_default() += 1;
        }
        if plan.to_level != old_level {
            self.log.push(LogRecord::new(self.now, "level", &plan.service_id).with("level", plan.to_level));
        }
        for (i, a) in plan.timeline.iter().enumerate() {
            self.queue.push(SimEvent { at: self.now + a.end(), kind: EventKind::EnactmentComplete { plan: id, action: i } });
        }
        let empty = plan.timeline.is_empty();
        self.plans.insert(id, ActivePlan { pending: (0..plan.timeline.len()).collect(), plan, started: self.now });
        if empty {
            self.finish_plan(id);
        }
    }

    fn classify(&self, sid: &str, in_transition: &BTreeSet<String>, infeasible: &BTreeSet<String>) -> (Occupancy, bool) {
        if in_transition.contains(sid) || infeasible.contains(sid) {
            return (Occupancy::Outage, false);
        }
        let d = &self.deployments[sid];
        if d.scale < 1.0 - CAPACITY_TOLERANCE {
            return (Occupancy::Outage, false);
        }
        let spec = &self.services[sid];
        let kpi = evaluate_kpis(&d.placement, &spec.graphs[d.level()], &spec.catalog, &self.infra);
        if !kpi.is_ok_and(|k| k.satisfied) {
            return (Occupancy::Outage, false);
        }
        (Occupancy::Level(d.level()), !self.migrating.contains_key(sid))
    }

    fn refresh_occupancy(&mut self) {
        let in_transition = self.services_in_transition();
        let infeasible = self.infeasible_services();
        let sids: Vec<String> = self.services.keys().cloned().collect();
        for sid in sids {
            let (occ, kpi_ok) = self.classify(&sid, &in_transition, &infeasible);
            let track = self.tracks[&sid];
            if track.occ == occ && track.kpi_ok == kpi_ok {
                continue;
            }
            self.accrue(&sid, self.now);
            if track.occ != occ {
                self.sla.begin(&sid, occ, self.now).expect("time moves forward");
            }
            self.tracks.insert(sid.clone(), Track { occ, kpi_ok, since: self.now });
            let label = match occ {
                Occupancy::Level(l) => format!("level{l}"),
                Occupancy::Outage => "outage".to_string(),
            };
            self.log.push(
                LogRecord::new(self.now, "state", &sid).with("occ", label).with("kpi", if kpi_ok { "ok" } else { "violated" }),
            );
        }
    }

    /// Books the time since the last change of `sid` up to `until`.
    fn accrue(&mut self, sid: &str, until: SimTime) {
        let track = self.tracks[sid];
        let span = (until - track.since).as_millis();
        let acc = self.accounts.get_mut(sid).expect("known service");
        match track.occ {
            Occupancy::Level(l) => acc.level_ms[l] += span,
            Occupancy::Outage => acc.outage_ms += span,
        }
        if !track.kpi_ok {
            acc.kpi_violation_ms += span;
        }
        if span > 0 {
            acc.intervals.push((track.since, until, track.occ));
        }
    }

    fn close_accounts(&mut self) {
        let sids: Vec<String> = self.services.keys().cloned().collect();
        for sid in sids {
            self.accrue(&sid, self.duration);
            let t = self.tracks.get_mut(&sid).expect("known service");
            t.since = self.duration;
        }
    }

    pub fn run_to_end(mut self) -> Result<RunOutput, SimError> {
        while !self.finished {
            self.step()?;
        }
        Ok(self.into_output())
    }

    /// Consumes a finished simulation.
    pub fn into_output(self) -> RunOutput {
        let report = metrics::build_report(
            &self.services,
            self.accounts.iter().map(|(s, a)| {
                (s.clone(), metrics::AccountView {
                    level_ms: a.level_ms.clone(),
                    outage_ms: a.outage_ms,
                    kpi_violation_ms: a.kpi_violation_ms,
                    violation_penalties: a.violation_penalties,
                    violations: a.violations,
                    intervals: a.intervals.clone(),
                })
            }),
            self.duration,
            self.reconfig_ops,
            &self.log,
        );
        RunOutput { report, log: self.log, timeseries: self.timeseries }
    }
}

/// Runs `scenario` under `policy` with default engine settings.
pub fn run(scenario: &Scenario, seed: u64, policy: PolicyConfig) -> Result<RunOutput, SimError> {
    run_with(scenario, seed, EngineConfig::new(policy))
}

pub fn run_with(scenario: &Scenario, seed: u64, cfg: EngineConfig) -> Result<RunOutput, SimError> {
    Simulation::new(scenario, seed, cfg)?.run_to_end()
}

/// Residual capacity of the records held by a simulation; exposed for tests.
pub fn residual_of(sim: &Simulation) -> CapacityView {
    residual_capacity(&sim.infra, sim.deployments.values()).expect("records are consistent")
}
