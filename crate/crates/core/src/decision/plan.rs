//! Transition planning: what has to be torn down, started, moved and
//! rerouted to go from one graph of a service to another.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::placement::{
    check_feasible, evaluate_kpis, graph_demands, place_graph, route_vlink, Demand, Deployment, FeasibilityReport,
    Infeasible, Pinning, Placement,
};
use crate::servicemodel::{shared_vnfs, ServiceSpec, VLinkKey, VnfGraph};
use crate::simengine::{sample_delay, DelayConfig, DelayKind, RngState};
use crate::time::SimTime;
use crate::topology::{residual_capacity, CapacityView, Infrastructure, CAPACITY_TOLERANCE};

/// Largest number of node assignments tried when the greedy embedding fails
/// and an exact search is requested.
pub const EXACT_PLACEMENT_LIMIT: usize = 256;

/// Everything the resource layer knows: infrastructure state, service
/// descriptors, current demand multipliers and deployment records.
#[derive(Debug, Clone)]
pub struct World<'a> {
    pub infra: &'a Infrastructure,
    pub services: &'a BTreeMap<String, ServiceSpec>,
    pub loads: &'a BTreeMap<String, f64>,
    pub deployments: BTreeMap<String, Deployment>,
    /// Services with a plan being enacted; their VNFs are not moved.
    pub in_flight: BTreeSet<String>,
}

impl<'a> World<'a> {
    pub fn load(&self, service: &str) -> f64 {
        self.loads.get(service).copied().unwrap_or(1.0)
    }

    pub fn spec(&self, service: &str) -> &'a ServiceSpec {
        &self.services[service]
    }

    pub fn residual(&self) -> CapacityView {
        residual_capacity(self.infra, self.deployments.values()).expect("deployment records match the infrastructure")
    }

    /// Residual with `service`'s own reservation released.
    pub fn residual_without(&self, service: &str) -> CapacityView {
        residual_capacity(self.infra, self.deployments.values().filter(|d| d.service_id != service))
            .expect("deployment records match the infrastructure")
    }

    pub fn feasibility(&self) -> FeasibilityReport {
        check_feasible(self.deployments.values(), self.infra)
    }

    /// Infeasible placement or a violated delay KPI. Scaled-down
    /// deployments are degraded but not broken.
    pub fn is_broken(&self, service: &str, report: &FeasibilityReport) -> bool {
        let Some(d) = self.deployments.get(service) else { return false };
        if report.touches(d) {
            return true;
        }
        let spec = self.spec(service);
        !evaluate_kpis(&d.placement, &spec.graphs[d.level()], &spec.catalog, self.infra).is_ok_and(|k| k.satisfied)
    }

    pub fn broken_services(&self) -> BTreeSet<String> {
        let report = self.feasibility();
        self.deployments.keys().filter(|s| self.is_broken(s, &report)).cloned().collect()
    }

    /// Replaces the records touched by `plan` with their post-transition state.
    pub fn apply(&mut self, plan: &TransitionPlan) {
        let spec = self.spec(&plan.service_id);
        let load = self.load(&plan.service_id);
        self.deployments
            .insert(plan.service_id.clone(), Deployment::new(spec, plan.target.clone(), load, plan.scale));
        for (svc, placement) in &plan.ripple_placements {
            let scale = self.deployments[svc].scale;
            let d = Deployment::new(self.spec(svc), placement.clone(), self.load(svc), scale);
            self.deployments.insert(svc.clone(), d);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Relocation {
    pub vnf: String,
    pub from: String,
    pub to: String,
}

/// A VNF of a service that is not being shifted, moved to make room.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Migration {
    pub service: String,
    pub vnf: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActionKind {
    Teardown,
    RouteRemove,
    Migrate,
    Instantiate,
    Relocate,
    RouteAdd,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Teardown => "teardown",
            ActionKind::RouteRemove => "route_remove",
            ActionKind::Migrate => "migrate",
            ActionKind::Instantiate => "instantiate",
            ActionKind::Relocate => "relocate",
            ActionKind::RouteAdd => "route_add",
        }
    }

    pub fn delay_kind(self) -> DelayKind {
        match self {
            ActionKind::Teardown => DelayKind::VnfTeardown,
            ActionKind::RouteRemove | ActionKind::RouteAdd => DelayKind::RouteUpdate,
            ActionKind::Migrate => DelayKind::VmMigrate,
            ActionKind::Instantiate | ActionKind::Relocate => DelayKind::VnfInstantiate,
        }
    }

    /// Break-before-make phase (0, 1 or 2).
    pub fn phase(self) -> usize {
        match self {
            ActionKind::Teardown | ActionKind::RouteRemove | ActionKind::Migrate => 0,
            ActionKind::Instantiate | ActionKind::Relocate => 1,
            ActionKind::RouteAdd => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedAction {
    pub kind: ActionKind,
    /// VNF id, `service:vnf` for migrations, or `src>dst` for routes.
    pub target: String,
    /// Offset from the plan start.
    pub start: SimTime,
    pub duration: SimTime,
}

impl TimedAction {
    pub fn end(&self) -> SimTime {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPlan {
    pub service_id: String,
    pub from_level: usize,
    pub to_level: usize,
    /// Reservation scale of the target (1 unless scaling down).
    pub scale: f64,
    pub removals: BTreeSet<String>,
    /// (vnf, node)
    pub instantiations: BTreeSet<(String, String)>,
    /// Own VNFs kept in the graph but moved off a failed or overloaded host.
    pub relocations: Vec<Relocation>,
    /// Routes withdrawn, with the path they used.
    pub route_removals: BTreeMap<VLinkKey, Vec<String>>,
    pub route_additions: BTreeMap<VLinkKey, Vec<String>>,
    pub ripple_migrations: Vec<Migration>,
    /// New placements of the services touched by ripple migrations.
    pub ripple_placements: BTreeMap<String, Placement>,
    pub target: Placement,
    /// Empty until [`schedule`] is called.
    pub timeline: Vec<TimedAction>,
}

impl TransitionPlan {
    pub fn is_empty(&self) -> bool {
        count_reconfig_ops(self) == 0
    }

    /// Actions in draw order: phase by phase, each group in id order.
    pub fn actions(&self) -> Vec<(ActionKind, String)> {
        let mut out = Vec::new();
        out.extend(self.removals.iter().map(|v| (ActionKind::Teardown, v.clone())));
        out.extend(self.route_removals.keys().map(|k| (ActionKind::RouteRemove, k.to_string())));
        out.extend(self.ripple_migrations.iter().map(|m| (ActionKind::Migrate, format!("{}:{}", m.service, m.vnf))));
        out.extend(self.instantiations.iter().map(|(v, _)| (ActionKind::Instantiate, v.clone())));
        out.extend(self.relocations.iter().map(|r| (ActionKind::Relocate, r.vnf.clone())));
        out.extend(self.route_additions.keys().map(|k| (ActionKind::RouteAdd, k.to_string())));
        out
    }

    /// Phase maxima summed; zero before scheduling.
    pub fn duration(&self) -> SimTime {
        self.timeline.iter().map(TimedAction::end).max().unwrap_or(SimTime::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanFailed {
    #[error("service {0:?} has no level {1}")]
    UnknownLevel(String, usize),
    #[error("service {0:?} has no deployment")]
    NotDeployed(String),
    #[error("target graph does not fit: {0}")]
    Placement(#[from] Infeasible),
    #[error("target placement misses its delay KPI ({delay_ms} ms > {max_ms} ms)")]
    Kpi { delay_ms: f64, max_ms: f64 },
}

/// Number of individual reconfiguration operations in `plan`.
pub fn count_reconfig_ops(plan: &TransitionPlan) -> usize {
    plan.removals.len()
        + plan.instantiations.len()
        + plan.relocations.len()
        + plan.route_removals.len()
        + plan.route_additions.len()
        + plan.ripple_migrations.len()
}

/// Plans the move of `service` from `from_level` to `to_level` without
/// touching other services.
///
/// VNFs shared by both graphs stay where they are unless their host is down
/// or can no longer hold them, in which case they are relocated. Routes are
/// kept when both endpoints stay put, the demand is unchanged and the path
/// is still usable.
pub fn plan_transition(
    world: &World,
    service: &str,
    from_level: usize,
    to_level: usize,
) -> Result<TransitionPlan, PlanFailed> {
    let current = world.deployments.get(service).ok_or_else(|| PlanFailed::NotDeployed(service.to_string()))?;
    if current.level() != from_level {
        return Err(PlanFailed::UnknownLevel(service.to_string(), from_level));
    }
    let base = world.residual_without(service);
    build_plan(world, service, to_level, 1.0, &base, false).map(|(p, _)| p)
}

/// As [`plan_transition`] from the current level, with an explicit
/// reservation scale for the target.
pub fn plan_scaled(world: &World, service: &str, to_level: usize, scale: f64) -> Result<TransitionPlan, PlanFailed> {
    let base = world.residual_without(service);
    build_plan(world, service, to_level, scale, &base, false).map(|(p, _)| p)
}

/// Everything fixed before the target graph is embedded: demands under the
/// current load and scale, shared VNFs left on their hosts when they still
/// fit, and routes between two such VNFs left in place.
pub(crate) struct Prepared<'w> {
    spec: &'w ServiceSpec,
    current: &'w Deployment,
    to_g: &'w VnfGraph,
    scale: f64,
    factor: f64,
    demand: BTreeMap<String, Demand>,
    bw: BTreeMap<VLinkKey, f64>,
    /// Residual with the pins reserved.
    pub work: CapacityView,
    pub pins: Pinning,
}

pub(crate) fn prepare<'w>(
    world: &'w World,
    service: &str,
    to_level: usize,
    scale: f64,
    base: &CapacityView,
) -> Result<Prepared<'w>, PlanFailed> {
    prepare_with(world, service, to_level, scale, base, true)
}

/// As [`prepare`]; with `pin_shared` off every VNF of the target graph is
/// free to go anywhere, so shared ones may be relocated.
pub(crate) fn prepare_with<'w>(
    world: &'w World,
    service: &str,
    to_level: usize,
    scale: f64,
    base: &CapacityView,
    pin_shared: bool,
) -> Result<Prepared<'w>, PlanFailed> {
    let spec = world.spec(service);
    let current = world.deployments.get(service).ok_or_else(|| PlanFailed::NotDeployed(service.to_string()))?;
    let from_g = &spec.graphs[current.level()];
    let to_g = spec.graph(to_level).ok_or_else(|| PlanFailed::UnknownLevel(service.to_string(), to_level))?;
    let factor = world.load(service) * scale;
    let (demand, bw) = graph_demands(to_g, &spec.catalog, factor);

    let mut work = base.clone();
    let mut pins = Pinning::default();
    let shared = if pin_shared { shared_vnfs(from_g, to_g) } else { BTreeSet::new() };
    for v in to_g.topo_order() {
        if !shared.contains(v) {
            continue;
        }
        let host = &current.placement.vnf_map[v];
        let d = demand[v];
        if work.fits_vnf(host, d.cpu, d.mem) {
            work.adjust_vnf(host, -d.cpu, -d.mem);
            pins.vnfs.insert(v.clone(), host.clone());
        }
    }
    for (key, need) in &bw {
        let (Some(path), Some(old_bw)) = (current.placement.route_map.get(key), current.vlink_bw.get(key)) else {
            continue;
        };
        let endpoints_kept = pins.vnfs.contains_key(&key.src) && pins.vnfs.contains_key(&key.dst);
        let same_demand = (old_bw - need).abs() <= CAPACITY_TOLERANCE;
        let usable = path.iter().all(|l| world.infra.is_link_usable(l) && work.fits_bw(l, *need));
        if endpoints_kept && same_demand && usable {
            work.adjust_path(path, -need);
            pins.routes.insert(key.clone(), path.clone());
        }
    }
    Ok(Prepared { spec, current, to_g, scale, factor, demand, bw, work, pins })
}

impl Prepared<'_> {
    /// Whether any shared VNF was left on its host.
    pub(crate) fn has_pins(&self) -> bool {
        !self.pins.vnfs.is_empty()
    }

    pub(crate) fn greedy(&self, world: &World) -> Result<Placement, PlanFailed> {
        let p = place_graph(self.to_g, &self.spec.catalog, world.infra, &self.work, &self.pins, self.factor)?;
        let k = evaluate_kpis(&p, self.to_g, &self.spec.catalog, world.infra).expect("complete placement");
        if k.satisfied {
            Ok(p)
        } else {
            Err(PlanFailed::Kpi { delay_ms: k.end_to_end_delay_ms, max_ms: self.to_g.kpi_max_delay_ms })
        }
    }

    /// Calls `f` on every feasible, KPI-satisfying embedding of the unpinned
    /// VNFs, in lexicographic order of node choices, until it returns true.
    /// Does nothing when there are more than [`EXACT_PLACEMENT_LIMIT`]
    /// assignments.
    pub(crate) fn for_each_exact(&self, world: &World, f: &mut dyn FnMut(Placement) -> bool) {
        let free: Vec<&String> = self.to_g.topo_order().iter().filter(|v| !self.pins.vnfs.contains_key(*v)).collect();
        let nodes = world.infra.up_node_ids();
        if nodes.is_empty() {
            return;
        }
        let Some(total) = nodes.len().checked_pow(free.len() as u32) else { return };
        if total > EXACT_PLACEMENT_LIMIT {
            return;
        }
        'codes: for code in 0..total {
            let mut trial = self.work.clone();
            let mut vnf_map = self.pins.vnfs.clone();
            let mut c = code;
            for v in &free {
                let n = nodes[c % nodes.len()];
                c /= nodes.len();
                let d = self.demand[*v];
                if !trial.fits_vnf(n, d.cpu, d.mem) {
                    continue 'codes;
                }
                trial.adjust_vnf(n, -d.cpu, -d.mem);
                vnf_map.insert((*v).clone(), n.to_string());
            }
            let mut route_map = BTreeMap::new();
            for (k, need) in &self.bw {
                if let Some(path) = self.pins.routes.get(k) {
                    route_map.insert(k.clone(), path.clone());
                    continue;
                }
                let Ok(path) = route_vlink(world.infra, &trial, &vnf_map[&k.src], &vnf_map[&k.dst], *need) else {
                    continue 'codes;
                };
                trial.adjust_path(&path, -need);
                route_map.insert(k.clone(), path);
            }
            let p = Placement { graph_level: self.to_g.level, vnf_map, route_map };
            if kpi_ok(world, self.spec, self.to_g, &p) && f(p) {
                return;
            }
        }
    }

    /// The plan that moves the service onto `placement`, and the residual
    /// once the target is reserved.
    pub(crate) fn finish(&self, placement: Placement) -> (TransitionPlan, CapacityView) {
        let mut work = self.work.clone();
        for (v, n) in &placement.vnf_map {
            if !self.pins.vnfs.contains_key(v) {
                work.adjust_vnf(n, -self.demand[v].cpu, -self.demand[v].mem);
            }
        }
        for (k, path) in &placement.route_map {
            if !self.pins.routes.contains_key(k) {
                work.adjust_path(path, -self.bw[k]);
            }
        }
        let current = self.current;
        let from_g = &self.spec.graphs[current.level()];
        let shared = shared_vnfs(from_g, self.to_g);
        let mut plan = TransitionPlan {
            service_id: self.spec.service_id.clone(),
            from_level: current.level(),
            to_level: self.to_g.level,
            scale: self.scale,
            removals: from_g.vnfs.difference(&self.to_g.vnfs).cloned().collect(),
            instantiations: BTreeSet::new(),
            relocations: Vec::new(),
            route_removals: BTreeMap::new(),
            route_additions: BTreeMap::new(),
            ripple_migrations: Vec::new(),
            ripple_placements: BTreeMap::new(),
            target: placement.clone(),
            timeline: Vec::new(),
        };
        for (v, n) in &placement.vnf_map {
            match current.placement.vnf_map.get(v) {
                Some(old) if shared.contains(v) => {
                    if old != n {
                        plan.relocations.push(Relocation { vnf: v.clone(), from: old.clone(), to: n.clone() });
                    }
                }
                _ => {
                    plan.instantiations.insert((v.clone(), n.clone()));
                }
            }
        }
        for (k, path) in &current.placement.route_map {
            if !self.pins.routes.contains_key(k) {
                plan.route_removals.insert(k.clone(), path.clone());
            }
        }
        for (k, path) in &placement.route_map {
            if !self.pins.routes.contains_key(k) {
                plan.route_additions.insert(k.clone(), path.clone());
            }
        }
        (plan, work)
    }
}

/// Builds a plan against `base`, a residual that excludes the service's
/// own reservation. Also returns the residual after the target is reserved.
pub(crate) fn build_plan(
    world: &World,
    service: &str,
    to_level: usize,
    scale: f64,
    base: &CapacityView,
    exact: bool,
) -> Result<(TransitionPlan, CapacityView), PlanFailed> {
    let prep = prepare(world, service, to_level, scale, base)?;
    let err = match prep.greedy(world) {
        Ok(p) => return Ok(prep.finish(p)),
        Err(e) if !exact => return Err(e),
        Err(e) => e,
    };
    let first = |prep: &Prepared| {
        let mut hit = None;
        prep.for_each_exact(world, &mut |p| {
            hit = Some(p);
            true
        });
        hit
    };
    if let Some(p) = first(&prep) {
        return Ok(prep.finish(p));
    }
    // relocating a shared VNF may be the only way
    if prep.has_pins() {
        let loose = prepare_with(world, service, to_level, scale, base, false)?;
        if let Some(p) = first(&loose) {
            return Ok(loose.finish(p));
        }
    }
    Err(err)
}

fn kpi_ok(world: &World, spec: &ServiceSpec, graph: &VnfGraph, p: &Placement) -> bool {
    evaluate_kpis(p, graph, &spec.catalog, world.infra).is_ok_and(|k| k.satisfied)
}

/// Draws a duration for every action and lays them out break-before-make:
/// each phase starts when the slowest action of the previous one ends.
pub fn schedule(plan: &mut TransitionPlan, delays: &DelayConfig, rng: &mut RngState) {
    let actions = plan.actions();
    let drawn: Vec<SimTime> =
        actions.iter().map(|(k, _)| SimTime::from_secs_f64(sample_delay(k.delay_kind(), delays, rng))).collect();
    let mut phase_len = [SimTime::ZERO; 3];
    for ((k, _), d) in actions.iter().zip(&drawn) {
        let p = k.phase();
        phase_len[p] = phase_len[p].max(*d);
    }
    let offset = [SimTime::ZERO, phase_len[0], phase_len[0] + phase_len[1]];
    plan.timeline = actions
        .into_iter()
        .zip(drawn)
        .map(|((kind, target), duration)| TimedAction { kind, target, start: offset[kind.phase()], duration })
        .collect();
}

impl fmt::Display for TransitionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}->{}: -{} +{} ~{} routes -{} +{} ripple {}",
            self.service_id,
            self.from_level,
            self.to_level,
            self.removals.len(),
            self.instantiations.len(),
            self.relocations.len(),
            self.route_removals.len(),
            self.route_additions.len(),
            self.ripple_migrations.len()
        )
    }
}
