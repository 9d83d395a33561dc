use std::collections::BTreeMap;

use crate::report::LogRecord;
use crate::servicemodel::{Occupancy, ServiceSpec};
use crate::time::SimTime;

/// Record kinds that make up the decision log.
pub const DECISION_KINDS: [&str; 6] = ["repair", "shift_down", "shift_up", "scale", "sla_violation", "sla_overrun"];

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceReport {
    pub id: String,
    pub level_ms: Vec<u64>,
    pub outage_ms: u64,
    pub kpi_violation_ms: u64,
    pub revenue: f64,
    pub penalties: f64,
    /// Peak secondary fraction over any window ending inside the run.
    pub secondary_fraction: f64,
    pub sla_ok: bool,
    /// SLAs knowingly broken by the decision layer (violations and overruns).
    pub sla_breaches: u32,
}

impl ServiceReport {
    pub fn level_seconds(&self) -> Vec<f64> {
        self.level_ms.iter().map(|&ms| ms as f64 / 1000.0).collect()
    }

    pub fn outage_s(&self) -> f64 {
        self.outage_ms as f64 / 1000.0
    }

    pub fn accounted_ms(&self) -> u64 {
        self.level_ms.iter().sum::<u64>() + self.outage_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub duration: SimTime,
    /// In service id order.
    pub services: Vec<ServiceReport>,
    pub total_revenue: f64,
    pub total_penalties: f64,
    pub total_outage_s: f64,
    pub kpi_violation_s: f64,
    pub reconfig_ops: usize,
    pub decisions: Vec<LogRecord>,
}

impl MetricsReport {
    pub fn service(&self, id: &str) -> Option<&ServiceReport> {
        self.services.iter().find(|s| s.id == id)
    }
}

pub(super) struct AccountView {
    pub level_ms: Vec<u64>,
    pub outage_ms: u64,
    pub kpi_violation_ms: u64,
    pub violation_penalties: f64,
    pub violations: u32,
    pub intervals: Vec<(SimTime, SimTime, Occupancy)>,
}

/// Largest share of any window of length `window` (ending in `(0, end]`)
/// spent at a level other than the primary one.
///
/// The windowed sum is piecewise linear in the window end, so its maximum
/// sits at an interval boundary or a boundary shifted by one window.
pub fn peak_secondary_fraction(intervals: &[(SimTime, SimTime, Occupancy)], window: SimTime, end: SimTime) -> f64 {
    let w = window.as_millis();
    if w == 0 {
        return 0.0;
    }
    let secondary: Vec<(u64, u64)> = intervals
        .iter()
        .filter(|(_, _, o)| o.is_secondary())
        .map(|(a, b, _)| (a.as_millis(), b.as_millis()))
        .collect();
    if secondary.is_empty() {
        return 0.0;
    }
    let end = end.as_millis();
    let mut candidates = vec![end];
    for &(a, b) in &secondary {
        for c in [a, b, a + w, b + w] {
            if c <= end {
                candidates.push(c);
            }
        }
    }
    let mut peak = 0u64;
    for t in candidates {
        let lo = t.saturating_sub(w);
        let sum: u64 = secondary.iter().map(|&(a, b)| b.min(t).saturating_sub(a.max(lo))).sum();
        peak = peak.max(sum);
    }
    peak as f64 / w as f64
}

pub(super) fn build_report(
    services: &BTreeMap<String, ServiceSpec>,
    accounts: impl Iterator<Item = (String, AccountView)>,
    duration: SimTime,
    reconfig_ops: usize,
    log: &[LogRecord],
) -> MetricsReport {
    let mut reports = Vec::new();
    for (sid, a) in accounts {
        let spec = &services[&sid];
        let revenue: f64 =
            a.level_ms.iter().enumerate().map(|(l, &ms)| ms as f64 * spec.revenue_rate(l) / 3_600_000.0).sum();
        let penalties = a.outage_ms as f64 / 1000.0 * spec.sla.outage_penalty_rate + a.violation_penalties;
        let fraction = peak_secondary_fraction(&a.intervals, spec.sla.window, duration);
        reports.push(ServiceReport {
            id: sid,
            level_ms: a.level_ms,
            outage_ms: a.outage_ms,
            kpi_violation_ms: a.kpi_violation_ms,
            revenue,
            penalties,
            secondary_fraction: fraction,
            sla_ok: fraction <= spec.sla.max_secondary_fraction + 1e-9,
            sla_breaches: a.violations,
        });
    }
    MetricsReport {
        duration,
        total_revenue: reports.iter().map(|r| r.revenue).sum(),
        total_penalties: reports.iter().map(|r| r.penalties).sum(),
        total_outage_s: reports.iter().map(|r| r.outage_ms).sum::<u64>() as f64 / 1000.0,
        kpi_violation_s: reports.iter().map(|r| r.kpi_violation_ms).sum::<u64>() as f64 / 1000.0,
        reconfig_ops,
        decisions: log.iter().filter(|r| DECISION_KINDS.contains(&r.kind.as_str())).cloned().collect(),
        services: reports,
    }
}
