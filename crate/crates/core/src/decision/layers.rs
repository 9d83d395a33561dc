//! The resource layer: owns deployment records and infrastructure state,
//! answers plan and what-if requests from the service layer.

use std::collections::BTreeMap;

use thiserror::Error;

use super::plan::{build_plan, plan_scaled, PlanFailed, TransitionPlan, World};
use super::ripple::{resolve_ripple, resolve_ripple_where, RippleExhausted};
use super::{detect_shortage, ShortageAssessment};
use crate::monitor::Alert;
use crate::placement::ViolationKind;
use crate::topology::CAPACITY_TOLERANCE;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Failed(#[from] PlanFailed),
    #[error(transparent)]
    Ripple(#[from] RippleExhausted),
}

/// What the service layer may ask of the resource layer. Nothing here
/// exposes residual capacity.
pub trait ResourceLayer {
    fn assess(&self, alerts: &[Alert]) -> ShortageAssessment;

    /// Plan moving `service` to `to_level` (its current level for a repair),
    /// falling back to ripple migrations when `ripple` is set.
    fn plan(&self, service: &str, to_level: usize, ripple: bool) -> Result<TransitionPlan, PlanError>;

    /// The first plan (fewest migrations first) moving `service` to
    /// `to_level` that `accept` approves.
    fn plan_where(
        &self,
        service: &str,
        to_level: usize,
        accept: &dyn Fn(&TransitionPlan) -> bool,
    ) -> Result<TransitionPlan, PlanError>;

    /// Plan re-reserving `service` at its current level with a scaled demand.
    fn plan_scaled(&self, service: &str, scale: f64) -> Result<TransitionPlan, PlanError>;

    /// Whether enacting `plan` would leave fewer broken services (after
    /// same-level repairs) or less overload than now.
    fn relieves(&self, plan: &TransitionPlan) -> bool;

    /// Whether, after `first`, `service` could move to `to_level` without ripple.
    fn enables(&self, first: &TransitionPlan, service: &str, to_level: usize) -> bool;
}

/// Residual problems left after repairing what can be repaired in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outlook {
    pub unrepairable: usize,
    pub overload: f64,
}

impl Outlook {
    pub fn better_than(&self, other: &Outlook) -> bool {
        self.unrepairable < other.unrepairable
            || (self.unrepairable == other.unrepairable && self.overload < other.overload - CAPACITY_TOLERANCE)
    }
}

pub fn outlook(world: &World) -> Outlook {
    let mut w = world.clone();
    let mut unrepairable = 0;
    for s in world.broken_services() {
        let level = w.deployments[&s].level();
        let base = w.residual_without(&s);
        match build_plan(&w, &s, level, w.deployments[&s].scale, &base, true) {
            Ok((p, _)) => w.apply(&p),
            Err(_) => unrepairable += 1,
        }
    }
    let overload = w
        .feasibility()
        .violations
        .iter()
        .filter(|v| v.kind != ViolationKind::ElementDown)
        .map(|v| v.amount)
        .sum();
    Outlook { unrepairable, overload }
}

pub struct Orchestrator<'a> {
    world: World<'a>,
    depth_limit: usize,
    baseline: Outlook,
}

impl<'a> Orchestrator<'a> {
    pub fn new(world: World<'a>, depth_limit: usize) -> Self {
        let baseline = outlook(&world);
        Orchestrator { world, depth_limit, baseline }
    }

    pub fn world(&self) -> &World<'a> {
        &self.world
    }

    pub fn baseline(&self) -> Outlook {
        self.baseline
    }
}

impl ResourceLayer for Orchestrator<'_> {
    fn assess(&self, alerts: &[Alert]) -> ShortageAssessment {
        let deployments: BTreeMap<_, _> = self.world.deployments.clone();
        let mut a = detect_shortage(alerts, &deployments, self.world.infra);
        let broken = self.world.broken_services();
        a.broken = a.affected.intersection(&broken).cloned().collect();
        a
    }

    fn plan(&self, service: &str, to_level: usize, ripple: bool) -> Result<TransitionPlan, PlanError> {
        let scale = self.world.deployments.get(service).map_or(1.0, |d| d.scale);
        let base = self.world.residual_without(service);
        match build_plan(&self.world, service, to_level, scale, &base, false) {
            Ok((p, _)) => Ok(p),
            Err(e) if !ripple || matches!(e, PlanFailed::NotDeployed(_) | PlanFailed::UnknownLevel(..)) => Err(e.into()),
            Err(_) => Ok(resolve_ripple(&self.world, service, to_level, self.depth_limit)?),
        }
    }

    fn plan_where(
        &self,
        service: &str,
        to_level: usize,
        accept: &dyn Fn(&TransitionPlan) -> bool,
    ) -> Result<TransitionPlan, PlanError> {
        let scale = self.world.deployments.get(service).map_or(1.0, |d| d.scale);
        let base = self.world.residual_without(service);
        match build_plan(&self.world, service, to_level, scale, &base, true) {
            Ok((p, _)) if accept(&p) => Ok(p),
            Err(e @ (PlanFailed::NotDeployed(_) | PlanFailed::UnknownLevel(..))) => Err(e.into()),
            _ => Ok(resolve_ripple_where(&self.world, service, to_level, self.depth_limit, accept)?),
        }
    }

    fn plan_scaled(&self, service: &str, scale: f64) -> Result<TransitionPlan, PlanError> {
        let level = self
            .world
            .deployments
            .get(service)
            .ok_or_else(|| PlanFailed::NotDeployed(service.to_string()))?
            .level();
        Ok(plan_scaled(&self.world, service, level, scale)?)
    }

    fn relieves(&self, plan: &TransitionPlan) -> bool {
        let mut w = self.world.clone();
        w.apply(plan);
        outlook(&w).better_than(&self.baseline)
    }

    fn enables(&self, first: &TransitionPlan, service: &str, to_level: usize) -> bool {
        let mut w = self.world.clone();
        w.apply(first);
        let base = w.residual_without(service);
        build_plan(&w, service, to_level, 1.0, &base, false).is_ok()
    }
}
