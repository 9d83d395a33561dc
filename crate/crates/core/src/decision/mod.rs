//! Two-layer decision engine.
//!
//! The service layer decides which service to shift and which SLA to break;
//! it sees alerts, SLA state, revenue and popularity, and obtains plans and
//! what-if answers from a [`ResourceLayer`]. The resource layer holds the
//! deployment records and computes placements, transitions and ripples.

mod layers;
pub mod plan;
pub mod ripple;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::{Alert, Direction, SourceKind};
use crate::placement::Deployment;
use crate::servicemodel::{sla_allows_downshift, DenyReason, Penalty, ServiceSpec, SlaState, SlaVerdict};
use crate::time::SimTime;
use crate::topology::Infrastructure;

pub use layers::{outlook, Orchestrator, Outlook, PlanError, ResourceLayer};
pub use plan::{
    count_reconfig_ops, plan_scaled, plan_transition, schedule, ActionKind, Migration, PlanFailed, Relocation,
    TimedAction, TransitionPlan, World,
};
pub use ripple::{foreign_vnfs, resolve_ripple, resolve_ripple_where, ForeignVnf, RippleExhausted};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Payoff,
    Qoe,
    Reaction,
    ScaleOnly,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Payoff, Policy::Qoe, Policy::Reaction, Policy::ScaleOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Payoff => "payoff",
            Policy::Qoe => "qoe",
            Policy::Reaction => "reaction",
            Policy::ScaleOnly => "scale_only",
        }
    }

    pub fn is_shifting(self) -> bool {
        self != Policy::ScaleOnly
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown policy {0:?} (expected payoff, qoe, reaction or scale_only)")]
pub struct UnknownPolicy(pub String);

impl FromStr for Policy {
    type Err = UnknownPolicy;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Most foreign VNFs a single transition may migrate.
    pub ripple_depth_limit: usize,
    pub shift_up_hysteresis: SimTime,
    /// Charged upfront against the secondary-time budget.
    pub min_dwell: SimTime,
    /// A secondary service whose budget runs out within this horizon is
    /// brought back to its primary graph regardless of hysteresis.
    pub overrun_lookahead: SimTime,
}

impl PolicyConfig {
    pub fn new(policy: Policy) -> Self {
        PolicyConfig {
            policy,
            ripple_depth_limit: 2,
            shift_up_hysteresis: SimTime::from_secs(120),
            min_dwell: SimTime::from_secs(120),
            overrun_lookahead: SimTime::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShiftDirection {
    Down,
    Up,
}

impl ShiftDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftDirection::Down => "down",
            ShiftDirection::Up => "up",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDecision {
    pub service_id: String,
    pub from_level: usize,
    pub to_level: usize,
    pub direction: ShiftDirection,
    pub reason: String,
}

impl ShiftDecision {
    fn new(service: &str, from: usize, to: usize, reason: impl Into<String>) -> Self {
        let direction = if to > from { ShiftDirection::Down } else { ShiftDirection::Up };
        ShiftDecision { service_id: service.to_string(), from_level: from, to_level: to, direction, reason: reason.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShortageAssessment {
    /// Raised alerts the assessment was built from.
    pub alerts: Vec<Alert>,
    /// Services named by an alert or placed on an alerted element.
    pub affected: BTreeSet<String>,
    /// Affected services whose deployment record is infeasible or misses its KPI.
    pub broken: BTreeSet<String>,
    /// Highest alerted value per infrastructure element.
    pub overload: BTreeMap<String, f64>,
}

impl ShortageAssessment {
    pub fn is_empty(&self) -> bool {
        self.affected.is_empty()
    }
}

/// Maps raised alerts to the services they concern: element alerts to the
/// services placed on the element, service alerts to the service itself.
pub fn detect_shortage(
    alerts: &[Alert],
    deployments: &BTreeMap<String, Deployment>,
    infra: &Infrastructure,
) -> ShortageAssessment {
    let mut out = ShortageAssessment::default();
    for a in alerts.iter().filter(|a| a.direction == Direction::Raised) {
        out.alerts.push(a.clone());
        match a.source {
            SourceKind::NodeCpu | SourceKind::NodeMem | SourceKind::LinkUtil => {
                if !infra.contains(&a.subject_id) {
                    continue;
                }
                let e = out.overload.entry(a.subject_id.clone()).or_insert(f64::NEG_INFINITY);
                *e = e.max(a.value);
                out.affected.extend(
                    deployments.values().filter(|d| d.uses_element(&a.subject_id)).map(|d| d.service_id.clone()),
                );
            }
            SourceKind::ServiceDelay | SourceKind::AppCustom => {
                if deployments.contains_key(&a.subject_id) {
                    out.affected.insert(a.subject_id.clone());
                }
            }
        }
    }
    out
}

/// Everything the service layer is allowed to look at.
#[derive(Debug, Clone)]
pub struct ServiceView<'a> {
    pub now: SimTime,
    pub services: &'a BTreeMap<String, ServiceSpec>,
    /// Level of each service's deployment record.
    pub levels: BTreeMap<String, usize>,
    /// Reservation scale of each deployment (below 1 only under scale_only).
    pub scales: BTreeMap<String, f64>,
    pub sla: &'a SlaState,
    pub in_flight: &'a BTreeSet<String>,
}

impl ServiceView<'_> {
    fn time_at_level(&self, service: &str) -> SimTime {
        let since = self.sla.ledger(service).map_or(SimTime::ZERO, |l| l.level_since());
        self.now.saturating_sub(since)
    }

    fn secondary_millis(&self, service: &str) -> u64 {
        self.sla.ledger(service).map_or(0, |l| l.secondary_millis(self.now))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exclusion {
    InFlight,
    Deepest,
    Denied(DenyReason),
    Unplannable,
    NoRelief,
}

impl Exclusion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Exclusion::InFlight => "in_flight",
            Exclusion::Deepest => "deepest",
            Exclusion::Denied(DenyReason::PriorityOrder { .. }) => "denied_priority",
            Exclusion::Denied(DenyReason::FractionBudget) => "denied_budget",
            Exclusion::Unplannable => "unplannable",
            Exclusion::NoRelief => "no_relief",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub service_id: String,
    pub key: f64,
    pub plan: TransitionPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSelection {
    pub decision: ShiftDecision,
    pub plan: TransitionPlan,
    pub key: f64,
    /// Every SLA-allowed, useful candidate with its policy key.
    pub candidates: Vec<(String, f64)>,
    pub excluded: Vec<(String, Exclusion)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no SLA-permitted service can be shifted down")]
pub struct NoCandidate {
    /// Services that would have qualified but for an SLA denial.
    pub denied: Vec<Candidate>,
    pub excluded: Vec<(String, Exclusion)>,
}

/// The quantity a policy minimises when picking a service to shift down.
pub fn policy_key(policy: Policy, spec: &ServiceSpec, plan: &TransitionPlan) -> f64 {
    match policy {
        Policy::Payoff => spec.revenue_rate(plan.from_level) - spec.revenue_rate(plan.to_level),
        Policy::Qoe => spec.popularity as f64,
        Policy::Reaction => count_reconfig_ops(plan) as f64,
        Policy::ScaleOnly => f64::INFINITY,
    }
}

/// Index of the smallest key; ties go to the earlier (lexicographically
/// smaller) service id because candidates arrive in id order.
fn argmin(cands: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cands.iter().enumerate() {
        if best.map_or(true, |b| c.key < cands[b].key) {
            best = Some(i);
        }
    }
    best
}

/// Picks the service to shift down one level.
///
/// Candidates are services with a deeper graph, not mid-transition, allowed
/// by their SLA, with a plannable transition that relieves the shortage.
/// The winner minimises the policy key; ties go to the smaller service id.
pub fn select_shift_down(
    cfg: &PolicyConfig,
    assessment: &ShortageAssessment,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
) -> Result<ShiftSelection, NoCandidate> {
    if assessment.is_empty() || !cfg.policy.is_shifting() {
        return Err(NoCandidate { denied: Vec::new(), excluded: Vec::new() });
    }
    select_with(cfg, view, rl, None, &|p| rl.relieves(p), "shortage")
}

fn select_with(
    cfg: &PolicyConfig,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
    skip: Option<&str>,
    useful: &dyn Fn(&TransitionPlan) -> bool,
    reason: &str,
) -> Result<ShiftSelection, NoCandidate> {
    let mut excluded = Vec::new();
    let mut allowed = Vec::new();
    let mut denied = Vec::new();
    for (sid, spec) in view.services {
        if Some(sid.as_str()) == skip {
            continue;
        }
        let Some(&level) = view.levels.get(sid) else { continue };
        if view.in_flight.contains(sid) {
            excluded.push((sid.clone(), Exclusion::InFlight));
            continue;
        }
        if level >= spec.deepest_level() {
            excluded.push((sid.clone(), Exclusion::Deepest));
            continue;
        }
        match sla_allows_downshift(spec, view.sla, view.now, view.services, &view.levels, cfg.min_dwell) {
            Ok(SlaVerdict::Allow) => allowed.push(sid.clone()),
            Ok(SlaVerdict::Deny(r)) => denied.push((sid.clone(), r)),
            Err(_) => excluded.push((sid.clone(), Exclusion::Unplannable)),
        }
    }
    let evaluate = |sid: &String, excluded: &mut Vec<(String, Exclusion)>| -> Option<Candidate> {
        let level = view.levels[sid];
        let plan = match rl.plan(sid, level + 1, true) {
            Ok(p) => p,
            Err(_) => {
                excluded.push((sid.clone(), Exclusion::Unplannable));
                return None;
            }
        };
        let plan = if useful(&plan) {
            plan
        } else {
            // a costlier plan (more migrations, relocated shared VNFs) may still help
            match rl.plan_where(sid, level + 1, useful) {
                Ok(p) => p,
                Err(_) => {
                    excluded.push((sid.clone(), Exclusion::NoRelief));
                    return None;
                }
            }
        };
        let key = policy_key(cfg.policy, &view.services[sid], &plan);
        Some(Candidate { service_id: sid.clone(), key, plan })
    };
    let cands: Vec<Candidate> = allowed.iter().filter_map(|s| evaluate(s, &mut excluded)).collect();
    if let Some(i) = argmin(&cands) {
        for (sid, r) in denied {
            excluded.push((sid, Exclusion::Denied(r)));
        }
        excluded.sort_by(|a, b| a.0.cmp(&b.0));
        let chosen = &cands[i];
        return Ok(ShiftSelection {
            decision: ShiftDecision::new(&chosen.service_id, chosen.plan.from_level, chosen.plan.to_level, reason),
            plan: chosen.plan.clone(),
            key: chosen.key,
            candidates: cands.iter().map(|c| (c.service_id.clone(), c.key)).collect(),
            excluded,
        });
    }
    let mut denied_cands = Vec::new();
    for (sid, r) in denied {
        if let Some(c) = evaluate(&sid, &mut excluded) {
            denied_cands.push(c);
        }
        excluded.push((sid, Exclusion::Denied(r)));
    }
    excluded.sort_by(|a, b| a.0.cmp(&b.0));
    Err(NoCandidate { denied: denied_cands, excluded })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no services to choose from")]
pub struct NoServices;

/// The SLA to break: lowest monetary penalty, SAFETY contracts only when
/// nothing else is left, ties by service id.
pub fn choose_sla_violation(candidates: &[(String, Penalty)]) -> Result<String, NoServices> {
    let mut sorted: Vec<&(String, Penalty)> = candidates.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let money = sorted
        .iter()
        .filter_map(|(s, p)| match p {
            Penalty::Money(m) => Some((s, *m)),
            Penalty::Safety => None,
        })
        .fold(None, |best: Option<(&String, f64)>, (s, m)| match best {
            Some((_, bm)) if bm <= m => best,
            _ => Some((s, m)),
        });
    match money {
        Some((s, _)) => Ok(s.clone()),
        None => sorted.first().map(|(s, _)| s.clone()).ok_or(NoServices),
    }
}

/// Whether moving `service` to level 0 keeps every higher-priority peer of
/// its vertical from sitting below a lower-priority primary.
fn primary_gate_open(service: &str, view: &ServiceView) -> bool {
    let spec = &view.services[service];
    view.services.values().all(|p| {
        p.vertical_id != spec.vertical_id
            || p.service_id == spec.service_id
            || p.sla.priority <= spec.sla.priority
            || view.levels.get(&p.service_id).copied().unwrap_or(0) == 0
    })
}

/// At most one service to shift one level up: among services below their
/// primary graph for at least the hysteresis time, whose shallower graph
/// fits without ripple, the one gaining the most revenue (ties by id).
pub fn consider_shift_up(
    cfg: &PolicyConfig,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
) -> Vec<(ShiftDecision, TransitionPlan)> {
    let mut best: Option<(f64, ShiftDecision, TransitionPlan)> = None;
    for (sid, spec) in view.services {
        let Some(&level) = view.levels.get(sid) else { continue };
        if level == 0 || view.in_flight.contains(sid) || view.time_at_level(sid) < cfg.shift_up_hysteresis {
            continue;
        }
        let to = level - 1;
        if to == 0 && !primary_gate_open(sid, view) {
            continue;
        }
        let Ok(plan) = rl.plan(sid, to, false) else { continue };
        let gain = spec.revenue_rate(to) - spec.revenue_rate(level);
        if best.as_ref().map_or(true, |(g, _, _)| gain > *g) {
            best = Some((gain, ShiftDecision::new(sid, level, to, "recovered"), plan));
        }
    }
    best.map(|(_, d, p)| vec![(d, p)]).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionLabel {
    Repair,
    ShiftDown,
    ShiftUp,
    Scale,
}

impl ActionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::Repair => "repair",
            ActionLabel::ShiftDown => "shift_down",
            ActionLabel::ShiftUp => "shift_up",
            ActionLabel::Scale => "scale",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub label: ActionLabel,
    pub decision: Option<ShiftDecision>,
    pub plan: TransitionPlan,
}

/// A decision record for the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Note {
    pub kind: &'static str,
    pub subject: String,
    pub detail: Vec<(&'static str, String)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochOutcome {
    pub actions: Vec<Action>,
    pub notes: Vec<Note>,
    /// Monetary penalties owed for SLAs broken this epoch.
    pub penalties: Vec<(String, f64)>,
}

/// Memory the service layer keeps between epochs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionState {
    /// Services whose secondary-time budget overran in the current episode.
    pub overrun: BTreeSet<String>,
}

/// Scale factors tried, largest first, when the scale-only baseline cannot
/// keep a full reservation.
pub const SCALE_STEPS: [f64; 9] = [0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];

fn fmt_key(x: f64) -> String {
    crate::report::fmt_sig6(x)
}

fn list<'a>(items: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let v: Vec<String> = items.into_iter().map(|(a, b)| format!("{a}:{b}")).collect();
    if v.is_empty() {
        "-".to_string()
    } else {
        v.join("|")
    }
}

fn selection_note(sel: &ShiftSelection, policy: Policy) -> Note {
    Note {
        kind: "shift_down",
        subject: sel.decision.service_id.clone(),
        detail: vec![
            ("from", sel.decision.from_level.to_string()),
            ("to", sel.decision.to_level.to_string()),
            ("policy", policy.as_str().to_string()),
            ("reason", sel.decision.reason.clone()),
            ("key", fmt_key(sel.key)),
            ("candidates", list(sel.candidates.iter().map(|(s, k)| (s.as_str(), fmt_key(*k))))),
            ("excluded", list(sel.excluded.iter().map(|(s, e)| (s.as_str(), e.as_str().to_string())))),
        ],
    }
}

/// One decision epoch: at most one shortage action (repair, shift down or
/// scale) and at most one upward action (shift up or scale restore).
pub fn run_epoch(
    cfg: &PolicyConfig,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
    alerts: &[Alert],
    state: &mut DecisionState,
) -> EpochOutcome {
    let mut out = EpochOutcome::default();
    state.overrun.retain(|s| view.levels.get(s).copied().unwrap_or(0) > 0);
    let assessment = rl.assess(alerts);
    let mut touched: BTreeSet<String> = BTreeSet::new();

    if view.in_flight.is_empty() && !assessment.broken.is_empty() {
        if let Some(a) = shortage_action(cfg, view, rl, &assessment, &mut out) {
            touched.insert(a.plan.service_id.clone());
            touched.extend(a.plan.ripple_placements.keys().cloned());
            out.actions.push(a);
        }
    }

    let shortage_free = assessment.broken.is_empty();
    let up = if cfg.policy.is_shifting() {
        upward_shift(cfg, view, rl, shortage_free, &touched, state, &mut out)
    } else if shortage_free {
        restore_scale(cfg, view, rl, &touched, &mut out)
    } else {
        None
    };
    if let Some(a) = up {
        out.actions.push(a);
    }
    out
}

fn shortage_action(
    cfg: &PolicyConfig,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
    assessment: &ShortageAssessment,
    out: &mut EpochOutcome,
) -> Option<Action> {
    for s in &assessment.broken {
        let level = view.levels[s];
        if let Ok(plan) = rl.plan(s, level, true) {
            if !plan.is_empty() {
                out.notes.push(Note {
                    kind: "repair",
                    subject: s.clone(),
                    detail: vec![("level", level.to_string()), ("ripple", plan.ripple_migrations.len().to_string())],
                });
                return Some(Action { label: ActionLabel::Repair, decision: None, plan });
            }
        }
    }
    if !cfg.policy.is_shifting() {
        for s in &assessment.broken {
            for f in SCALE_STEPS {
                if let Ok(plan) = rl.plan_scaled(s, f) {
                    out.notes.push(Note { kind: "scale", subject: s.clone(), detail: vec![("scale", fmt_key(f))] });
                    return Some(Action { label: ActionLabel::Scale, decision: None, plan });
                }
            }
        }
        return None;
    }
    match select_shift_down(cfg, assessment, view, rl) {
        Ok(sel) => {
            out.notes.push(selection_note(&sel, cfg.policy));
            Some(Action { label: ActionLabel::ShiftDown, decision: Some(sel.decision), plan: sel.plan })
        }
        Err(nc) => violate(cfg, view, nc, out),
    }
}

/// Records a knowingly broken SLA together with the set it was chosen from.
fn violation_note(kind: &'static str, service: &str, penalty: Penalty, pairs: &[(String, Penalty)]) -> Note {
    Note {
        kind,
        subject: service.to_string(),
        detail: vec![
            ("penalty", penalty.to_string()),
            ("denied", list(pairs.iter().map(|(s, p)| (s.as_str(), p.to_string())))),
        ],
    }
}

/// Shifts down the denied candidate whose SLA is cheapest to break.
fn violate(cfg: &PolicyConfig, view: &ServiceView, nc: NoCandidate, out: &mut EpochOutcome) -> Option<Action> {
    let pairs: Vec<(String, Penalty)> = nc
        .denied
        .iter()
        .map(|c| (c.service_id.clone(), view.services[&c.service_id].sla.violation_penalty))
        .collect();
    let chosen = choose_sla_violation(&pairs).ok()?;
    let c = nc.denied.into_iter().find(|c| c.service_id == chosen)?;
    let penalty = view.services[&chosen].sla.violation_penalty;
    out.notes.push(violation_note("sla_violation", &chosen, penalty, &pairs));
    out.penalties.push((chosen.clone(), penalty.monetary()));
    let sel = ShiftSelection {
        decision: ShiftDecision::new(&chosen, c.plan.from_level, c.plan.to_level, "sla_violation"),
        key: c.key,
        candidates: Vec::new(),
        excluded: nc.excluded,
        plan: c.plan,
    };
    out.notes.push(selection_note(&sel, cfg.policy));
    Some(Action { label: ActionLabel::ShiftDown, decision: Some(sel.decision), plan: sel.plan })
}

/// Services whose secondary-time budget runs out before the next epoch,
/// plus the higher-priority peers that must return to primary first.
fn budget_due(cfg: &PolicyConfig, view: &ServiceView) -> BTreeSet<String> {
    let mut due = BTreeSet::new();
    for (sid, spec) in view.services {
        if view.levels.get(sid).copied().unwrap_or(0) == 0 {
            continue;
        }
        let budget = spec.sla.max_secondary_fraction * spec.sla.window.as_millis() as f64;
        if (view.secondary_millis(sid) + cfg.overrun_lookahead.as_millis()) as f64 >= budget {
            due.insert(sid.clone());
        }
    }
    loop {
        let mut extra = BTreeSet::new();
        for sid in &due {
            let spec = &view.services[sid];
            for p in view.services.values() {
                if p.vertical_id == spec.vertical_id
                    && p.sla.priority > spec.sla.priority
                    && view.levels.get(&p.service_id).copied().unwrap_or(0) > 0
                    && !due.contains(&p.service_id)
                {
                    extra.insert(p.service_id.clone());
                }
            }
        }
        if extra.is_empty() {
            return due;
        }
        due.extend(extra);
    }
}

fn upward_shift(
    cfg: &PolicyConfig,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
    shortage_free: bool,
    touched: &BTreeSet<String>,
    state: &mut DecisionState,
    out: &mut EpochOutcome,
) -> Option<Action> {
    let due = budget_due(cfg, view);
    // higher priority first: they gate the return of their lower-priority peers
    let mut due_order: Vec<&String> = due.iter().collect();
    due_order.sort_by(|a, b| view.services[*b].sla.priority.cmp(&view.services[*a].sla.priority).then(a.cmp(b)));
    let mut stuck = Vec::new();
    for sid in due_order {
        if view.in_flight.contains(sid) || touched.contains(sid) {
            continue;
        }
        let level = view.levels[sid];
        if !primary_gate_open(sid, view) {
            stuck.push(sid.clone());
            continue;
        }
        match rl.plan(sid, 0, false) {
            Ok(plan) => {
                let spec = &view.services[sid];
                out.notes.push(Note {
                    kind: "shift_up",
                    subject: sid.clone(),
                    detail: vec![
                        ("from", level.to_string()),
                        ("to", "0".to_string()),
                        ("reason", "budget".to_string()),
                        ("gain", fmt_key(spec.revenue_rate(0) - spec.revenue_rate(level))),
                    ],
                });
                let decision = ShiftDecision::new(sid, level, 0, "budget");
                return Some(Action { label: ActionLabel::ShiftUp, decision: Some(decision), plan });
            }
            Err(_) => stuck.push(sid.clone()),
        }
    }

    if let Some(sid) = stuck.first() {
        // make room by shifting someone else down, if nothing else moved this epoch
        if touched.is_empty() && view.in_flight.is_empty() && primary_gate_open(sid, view) {
            let target = sid.clone();
            match select_with(cfg, view, rl, Some(sid), &|p| rl.enables(p, &target, 0), "budget_swap") {
                Ok(sel) => {
                    out.notes.push(selection_note(&sel, cfg.policy));
                    return Some(Action { label: ActionLabel::ShiftDown, decision: Some(sel.decision), plan: sel.plan });
                }
                Err(nc) if !state.overrun.contains(sid) => {
                    // some SLA breaks either way: the overrunning one, or that of a peer pushed down for it
                    let own = view.services[sid].sla.violation_penalty;
                    let mut pairs: Vec<(String, Penalty)> = nc
                        .denied
                        .iter()
                        .map(|c| (c.service_id.clone(), view.services[&c.service_id].sla.violation_penalty))
                        .collect();
                    pairs.push((sid.clone(), own));
                    let chosen = choose_sla_violation(&pairs).expect("non-empty");
                    if &chosen != sid {
                        let c = nc.denied.into_iter().find(|c| c.service_id == chosen).expect("chosen from denied");
                        let penalty = view.services[&chosen].sla.violation_penalty;
                        out.notes.push(violation_note("sla_violation", &chosen, penalty, &pairs));
                        out.penalties.push((chosen.clone(), penalty.monetary()));
                        let sel = ShiftSelection {
                            decision: ShiftDecision::new(&chosen, c.plan.from_level, c.plan.to_level, "budget_swap"),
                            key: c.key,
                            candidates: Vec::new(),
                            excluded: nc.excluded,
                            plan: c.plan,
                        };
                        out.notes.push(selection_note(&sel, cfg.policy));
                        return Some(Action { label: ActionLabel::ShiftDown, decision: Some(sel.decision), plan: sel.plan });
                    }
                    state.overrun.insert(sid.clone());
                    out.notes.push(violation_note("sla_overrun", sid, own, &pairs));
                    out.penalties.push((sid.clone(), own.monetary()));
                }
                Err(_) => {}
            }
        }
        for s in &stuck {
            if state.overrun.insert(s.clone()) {
                let penalty = view.services[s].sla.violation_penalty;
                out.notes.push(violation_note("sla_overrun", s, penalty, &[(s.clone(), penalty)]));
                out.penalties.push((s.clone(), penalty.monetary()));
            }
        }
    }

    // room freed for a service short on budget is not up for grabs
    if !shortage_free || due.iter().any(|s| !state.overrun.contains(s)) {
        return None;
    }
    let (decision, plan) = consider_shift_up(cfg, view, rl)
        .into_iter()
        .find(|(d, _)| !touched.contains(&d.service_id) && !due.contains(&d.service_id))?;
    let spec = &view.services[&decision.service_id];
    out.notes.push(Note {
        kind: "shift_up",
        subject: decision.service_id.clone(),
        detail: vec![
            ("from", decision.from_level.to_string()),
            ("to", decision.to_level.to_string()),
            ("reason", decision.reason.clone()),
            ("gain", fmt_key(spec.revenue_rate(decision.to_level) - spec.revenue_rate(decision.from_level))),
        ],
    });
    Some(Action { label: ActionLabel::ShiftUp, decision: Some(decision), plan })
}

/// Scale-only counterpart of shifting up: give a degraded service its full
/// reservation back once it fits without disturbing anyone. Highest revenue
/// rate first, ties by id.
fn restore_scale(
    cfg: &PolicyConfig,
    view: &ServiceView,
    rl: &dyn ResourceLayer,
    touched: &BTreeSet<String>,
    out: &mut EpochOutcome,
) -> Option<Action> {
    let mut cands: Vec<(f64, &String, f64)> = Vec::new();
    for (sid, scale) in &view.scales {
        if *scale >= 1.0 || touched.contains(sid) || view.in_flight.contains(sid) {
            continue;
        }
        if view.time_at_level(sid) < cfg.shift_up_hysteresis {
            continue;
        }
        cands.push((view.services[sid].revenue_rate(view.levels[sid]), sid, *scale));
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    for (_, sid, from) in cands {
        if let Ok(plan) = rl.plan_scaled(sid, 1.0) {
            out.notes.push(Note {
                kind: "scale",
                subject: sid.clone(),
                detail: vec![("scale", fmt_key(1.0)), ("from", fmt_key(from))],
            });
            return Some(Action { label: ActionLabel::Scale, decision: None, plan });
        }
    }
    None
}
