//! SLA accounting over a rolling time window.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use super::{ServiceError, ServiceSpec};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Level(usize),
    Outage,
}

impl Occupancy {
    pub fn is_secondary(self) -> bool {
        matches!(self, Occupancy::Level(l) if l > 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlaError {
    #[error("interval [{t0}, {t1}] of {service:?} overlaps a recorded interval ending at {last}")]
    OverlappingInterval { service: String, t0: SimTime, t1: SimTime, last: SimTime },
    #[error("interval of {service:?} ends before it starts")]
    NegativeInterval { service: String },
    #[error("service {0:?} is not tracked")]
    UnknownService(String),
}

/// Per-service accounting: recorded intervals inside the window, plus the
/// interval currently open.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceLedger {
    window: SimTime,
    intervals: VecDeque<(SimTime, SimTime, Occupancy)>,
    last_end: Option<SimTime>,
    open: Option<(Occupancy, SimTime)>,
    level: usize,
    level_since: SimTime,
}

impl ServiceLedger {
    pub fn new(window: SimTime) -> Self {
        ServiceLedger {
            window,
            intervals: VecDeque::new(),
            last_end: None,
            open: None,
            level: 0,
            level_since: SimTime::ZERO,
        }
    }

    pub fn window(&self) -> SimTime {
        self.window
    }

    /// Current graph level as last decided.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn level_since(&self) -> SimTime {
        self.level_since
    }

    pub fn open_occupancy(&self) -> Option<Occupancy> {
        self.open.map(|(o, _)| o)
    }

    fn record(&mut self, service: &str, occ: Occupancy, t0: SimTime, t1: SimTime) -> Result<(), SlaError> {
        if t1 < t0 {
            return Err(SlaError::NegativeInterval { service: service.to_string() });
        }
        if let Some(last) = self.last_end {
            if t0 < last {
                return Err(SlaError::OverlappingInterval { service: service.to_string(), t0, t1, last });
            }
        }
        self.last_end = Some(t1);
        if t1 > t0 {
            self.intervals.push_back((t0, t1, occ));
        }
        let horizon = t1.saturating_sub(self.window);
        while matches!(self.intervals.front(), Some((_, end, _)) if *end <= horizon) {
            self.intervals.pop_front();
        }
        Ok(())
    }

    /// Milliseconds within `[now - window, now]` spent in occupancies
    /// matching `pred`, including the open interval up to `now`.
    pub fn millis_in_window(&self, now: SimTime, pred: impl Fn(Occupancy) -> bool) -> u64 {
        let lo = now.saturating_sub(self.window);
        let clip = |t0: SimTime, t1: SimTime| -> u64 {
            let a = t0.max(lo);
            let b = t1.min(now);
            if b > a {
                (b - a).as_millis()
            } else {
                0
            }
        };
        let mut total = 0;
        for (t0, t1, occ) in &self.intervals {
            if pred(*occ) {
                total += clip(*t0, *t1);
            }
        }
        if let Some((occ, since)) = self.open {
            if pred(occ) {
                total += clip(since, now);
            }
        }
        total
    }

    pub fn secondary_millis(&self, now: SimTime) -> u64 {
        self.millis_in_window(now, Occupancy::is_secondary)
    }

    pub fn outage_millis(&self, now: SimTime) -> u64 {
        self.millis_in_window(now, |o| o == Occupancy::Outage)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlaState {
    ledgers: BTreeMap<String, ServiceLedger>,
}

impl SlaState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, service: &str, window: SimTime) {
        self.ledgers.insert(service.to_string(), ServiceLedger::new(window));
    }

    pub fn ledger(&self, service: &str) -> Option<&ServiceLedger> {
        self.ledgers.get(service)
    }

    fn ledger_mut(&mut self, service: &str) -> Result<&mut ServiceLedger, SlaError> {
        self.ledgers.get_mut(service).ok_or_else(|| SlaError::UnknownService(service.to_string()))
    }

    /// Adds a closed interval. Intervals of one service must not overlap and
    /// must arrive in time order.
    pub fn record_interval(
        &mut self,
        service: &str,
        occ: Occupancy,
        t0: SimTime,
        t1: SimTime,
    ) -> Result<(), SlaError> {
        self.ledger_mut(service)?.record(service, occ, t0, t1)
    }

    /// Closes the open interval at `t` (recording it) and opens `occ`.
    pub fn begin(&mut self, service: &str, occ: Occupancy, t: SimTime) -> Result<(), SlaError> {
        let ledger = self.ledger_mut(service)?;
        if let Some((prev, since)) = ledger.open.take() {
            ledger.record(service, prev, since, t)?;
        }
        ledger.open = Some((occ, t));
        Ok(())
    }

    pub fn set_level(&mut self, service: &str, level: usize, t: SimTime) -> Result<(), SlaError> {
        let ledger = self.ledger_mut(service)?;
        ledger.level = level;
        ledger.level_since = t;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    /// A same-vertical service of strictly lower priority is still primary.
    PriorityOrder { blocking: String },
    FractionBudget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlaVerdict {
    Allow,
    Deny(DenyReason),
}

impl SlaVerdict {
    pub fn is_allow(&self) -> bool {
        matches!(self, SlaVerdict::Allow)
    }
}

/// Whether `spec` may be shifted down now.
///
/// `levels` must hold the current level of every service in `services` that
/// shares `spec`'s vertical. `min_dwell` is charged upfront against the
/// secondary-time budget.
pub fn sla_allows_downshift(
    spec: &ServiceSpec,
    state: &SlaState,
    now: SimTime,
    services: &BTreeMap<String, ServiceSpec>,
    levels: &BTreeMap<String, usize>,
    min_dwell: SimTime,
) -> Result<SlaVerdict, ServiceError> {
    let mut blocking: Option<&str> = None;
    for peer in services.values() {
        if peer.vertical_id != spec.vertical_id || peer.service_id == spec.service_id {
            continue;
        }
        let level = *levels
            .get(&peer.service_id)
            .ok_or_else(|| ServiceError::UnknownPeer(peer.service_id.clone()))?;
        if peer.sla.priority < spec.sla.priority && level == 0 && blocking.is_none() {
            blocking = Some(&peer.service_id);
        }
    }
    if let Some(b) = blocking {
        return Ok(SlaVerdict::Deny(DenyReason::PriorityOrder { blocking: b.to_string() }));
    }

    let ledger = state
        .ledger(&spec.service_id)
        .ok_or_else(|| ServiceError::UnknownPeer(spec.service_id.clone()))?;
    let used = ledger.secondary_millis(now) + min_dwell.as_millis();
    let budget = spec.sla.max_secondary_fraction * spec.sla.window.as_millis() as f64;
    if used as f64 > budget + 1e-9 {
        return Ok(SlaVerdict::Deny(DenyReason::FractionBudget));
    }
    Ok(SlaVerdict::Allow)
}
