//! Simulated monitoring platform.
//!
//! Metric samples from the simulated sources are kept per stream; threshold
//! rules with hysteresis turn them into raised/cleared alerts, which are
//! dispatched to the decision layers holding a matching subscription.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    NodeCpu,
    NodeMem,
    LinkUtil,
    ServiceDelay,
    AppCustom,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::NodeCpu => "node_cpu",
            SourceKind::NodeMem => "node_mem",
            SourceKind::LinkUtil => "link_util",
            SourceKind::ServiceDelay => "service_delay",
            SourceKind::AppCustom => "app_custom",
        }
    }

    /// Who hears about this kind of metric unless a rule says otherwise.
    pub fn default_consumer(self) -> Consumer {
        match self {
            SourceKind::ServiceDelay | SourceKind::AppCustom => Consumer::ServiceLayer,
            _ => Consumer::ResourceLayer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consumer {
    ResourceLayer,
    ServiceLayer,
}

impl Consumer {
    pub fn as_str(self) -> &'static str {
        match self {
            Consumer::ResourceLayer => "resource_layer",
            Consumer::ServiceLayer => "service_layer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub source: SourceKind,
    pub subject: String,
    pub value: f64,
    pub timestamp: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateKind {
    #[default]
    Instant,
    SlidingMean,
}

fn default_subject() -> String {
    "*".to_string()
}

fn default_sustain() -> u32 {
    1
}

/// Alert rule as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlertRuleSpec {
    pub id: String,
    pub source: SourceKind,
    #[serde(default = "default_subject")]
    pub subject: String,
    #[serde(default)]
    pub aggregate: AggregateKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_s: Option<f64>,
    pub fire: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clear: Option<f64>,
    #[serde(default = "default_sustain")]
    pub sustain: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notify: Option<Vec<Consumer>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubjectSelector {
    Any,
    Exact(String),
}

impl SubjectSelector {
    pub fn matches(&self, subject: &str) -> bool {
        match self {
            SubjectSelector::Any => true,
            SubjectSelector::Exact(s) => s == subject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregate {
    Instant,
    SlidingMean(SimTime),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlertRule {
    pub rule_id: String,
    pub source: SourceKind,
    pub subject: SubjectSelector,
    pub aggregate: Aggregate,
    pub fire_threshold: f64,
    pub clear_threshold: f64,
    pub sustain_samples: u32,
    pub notify: Vec<Consumer>,
}

/// Clear level used when a rule gives none: 80 % of the fire level.
pub const DEFAULT_CLEAR_RATIO: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("sample for {kind}/{subject} at {at} precedes the previous one at {last}")]
    OutOfOrderSample { kind: &'static str, subject: String, at: SimTime, last: SimTime },
    #[error("rule {rule:?}: {reason}")]
    InvalidRule { rule: String, reason: String },
    #[error("duplicate rule id {0:?}")]
    DuplicateRule(String),
}

impl AlertRule {
    pub fn from_spec(spec: &AlertRuleSpec) -> Result<AlertRule, MonitorError> {
        let bad = |reason: &str| MonitorError::InvalidRule { rule: spec.id.clone(), reason: reason.to_string() };
        if !crate::topology::is_valid_id(&spec.id) {
            return Err(bad("rule ids use only [A-Za-z0-9_.-]"));
        }
        if !spec.fire.is_finite() {
            return Err(bad("fire threshold must be finite"));
        }
        let clear = spec.clear.unwrap_or(spec.fire * DEFAULT_CLEAR_RATIO);
        if !clear.is_finite() || clear > spec.fire {
            return Err(bad("clear threshold must not exceed the fire threshold"));
        }
        if spec.sustain == 0 {
            return Err(bad("sustain must be at least 1"));
        }
        let aggregate = match (spec.aggregate, spec.window_s) {
            (AggregateKind::Instant, None) => Aggregate::Instant,
            (AggregateKind::Instant, Some(_)) => return Err(bad("window_s only applies to sliding_mean")),
            (AggregateKind::SlidingMean, Some(w)) if w.is_finite() && w > 0.0 => {
                Aggregate::SlidingMean(SimTime::from_secs_f64(w))
            }
            (AggregateKind::SlidingMean, _) => return Err(bad("sliding_mean needs a positive window_s")),
        };
        let subject = match spec.subject.as_str() {
            "*" => SubjectSelector::Any,
            s if crate::topology::is_valid_id(s) => SubjectSelector::Exact(s.to_string()),
            _ => return Err(bad("subject must be an element/service id or \"*\"")),
        };
        let mut notify = spec.notify.clone().unwrap_or_else(|| vec![spec.source.default_consumer()]);
        notify.sort();
        notify.dedup();
        Ok(AlertRule {
            rule_id: spec.id.clone(),
            source: spec.source,
            subject,
            aggregate,
            fire_threshold: spec.fire,
            clear_threshold: clear,
            sustain_samples: spec.sustain,
            notify,
        })
    }

    pub fn to_spec(&self) -> AlertRuleSpec {
        let (aggregate, window_s) = match self.aggregate {
            Aggregate::Instant => (AggregateKind::Instant, None),
            Aggregate::SlidingMean(w) => (AggregateKind::SlidingMean, Some(w.as_secs_f64())),
        };
        AlertRuleSpec {
            id: self.rule_id.clone(),
            source: self.source,
            subject: match &self.subject {
                SubjectSelector::Any => "*".to_string(),
                SubjectSelector::Exact(s) => s.clone(),
            },
            aggregate,
            window_s,
            fire: self.fire_threshold,
            clear: Some(self.clear_threshold),
            sustain: self.sustain_samples,
            notify: Some(self.notify.clone()),
        }
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = Subscription> + '_ {
        self.notify
            .iter()
            .map(|c| Subscription { consumer: *c, selector: RuleSelector::Rule(self.rule_id.clone()) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Raised,
    Cleared,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Raised => "raised",
            Direction::Cleared => "cleared",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub rule_id: String,
    pub source: SourceKind,
    pub subject_id: String,
    pub fired_at: SimTime,
    pub direction: Direction,
    /// Aggregate value that triggered the transition.
    pub value: f64,
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{} {} at {}", self.rule_id, self.subject_id, self.direction.as_str(), self.fired_at)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleSelector {
    Any,
    Rule(String),
    Source(SourceKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub consumer: Consumer,
    pub selector: RuleSelector,
}

impl Subscription {
    pub fn matches(&self, alert: &Alert) -> bool {
        match &self.selector {
            RuleSelector::Any => true,
            RuleSelector::Rule(id) => *id == alert.rule_id,
            RuleSelector::Source(k) => *k == alert.source,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Stream {
    samples: VecDeque<(SimTime, f64)>,
    last: Option<SimTime>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Track {
    streak: u32,
    raised: bool,
}

#[derive(Debug, Clone)]
pub struct MonitorState {
    rules: Vec<AlertRule>,
    retention: SimTime,
    streams: BTreeMap<(SourceKind, String), Stream>,
    tracks: BTreeMap<(String, String), Track>,
}

impl MonitorState {
    /// Rules are evaluated in id order.
    pub fn new(mut rules: Vec<AlertRule>) -> Result<Self, MonitorError> {
        rules.sort_by(|a, b| a.rule_id.cmp(&b.rule_id));
        if let Some(w) = rules.windows(2).find(|w| w[0].rule_id == w[1].rule_id) {
            return Err(MonitorError::DuplicateRule(w[0].rule_id.clone()));
        }
        let retention = rules
            .iter()
            .filter_map(|r| match r.aggregate {
                Aggregate::SlidingMean(w) => Some(w),
                Aggregate::Instant => None,
            })
            .max()
            .unwrap_or(SimTime::ZERO);
        Ok(MonitorState { rules, retention, streams: BTreeMap::new(), tracks: BTreeMap::new() })
    }

    pub fn rules(&self) -> &[AlertRule] {
        &self.rules
    }

    pub fn ingest_sample(&mut self, sample: MetricSample) -> Result<(), MonitorError> {
        let stream = self.streams.entry((sample.source, sample.subject.clone())).or_default();
        if let Some(last) = stream.last {
            if sample.timestamp < last {
                return Err(MonitorError::OutOfOrderSample {
                    kind: sample.source.as_str(),
                    subject: sample.subject,
                    at: sample.timestamp,
                    last,
                });
            }
        }
        stream.last = Some(sample.timestamp);
        stream.samples.push_back((sample.timestamp, sample.value));
        // a sample at t stays visible to windows ending before t + retention
        let expired = |t: SimTime| t + self.retention <= sample.timestamp && t < sample.timestamp;
        while stream.samples.len() > 1 && stream.samples.front().is_some_and(|(t, _)| expired(*t)) {
            stream.samples.pop_front();
        }
        Ok(())
    }

    /// Latest value, or the mean over `(now - window, now]`.
    pub fn aggregate(&self, source: SourceKind, subject: &str, aggregate: Aggregate, now: SimTime) -> Option<f64> {
        let stream = self.streams.get(&(source, subject.to_string()))?;
        match aggregate {
            Aggregate::Instant => stream.samples.iter().rev().find(|(t, _)| *t <= now).map(|(_, v)| *v),
            Aggregate::SlidingMean(w) => {
                let lo = now.as_millis() as i128 - w.as_millis() as i128;
                let inside: Vec<f64> = stream
                    .samples
                    .iter()
                    .filter(|(t, _)| (t.as_millis() as i128) > lo && *t <= now)
                    .map(|(_, v)| *v)
                    .collect();
                if inside.is_empty() {
                    None
                } else {
                    Some(inside.iter().sum::<f64>() / inside.len() as f64)
                }
            }
        }
    }

    /// One evaluation of every rule against every matching stream.
    pub fn evaluate_rules(&mut self, now: SimTime) -> Vec<Alert> {
        let mut alerts = Vec::new();
        for rule in &self.rules {
            let subjects: Vec<&String> = self
                .streams
                .keys()
                .filter(|(k, s)| *k == rule.source && rule.subject.matches(s))
                .map(|(_, s)| s)
                .collect();
            for subject in subjects {
                let Some(value) = self.aggregate(rule.source, subject, rule.aggregate, now) else { continue };
                let track = self.tracks.entry((rule.rule_id.clone(), subject.clone())).or_default();
                if track.raised {
                    if value <= rule.clear_threshold {
                        track.raised = false;
                        track.streak = 0;
                        alerts.push(Alert {
                            rule_id: rule.rule_id.clone(),
                            source: rule.source,
                            subject_id: subject.clone(),
                            fired_at: now,
                            direction: Direction::Cleared,
                            value,
                        });
                    }
                    continue;
                }
                if value >= rule.fire_threshold {
                    track.streak += 1;
                } else {
                    track.streak = 0;
                }
                if track.streak >= rule.sustain_samples {
                    track.raised = true;
                    alerts.push(Alert {
                        rule_id: rule.rule_id.clone(),
                        source: rule.source,
                        subject_id: subject.clone(),
                        fired_at: now,
                        direction: Direction::Raised,
                        value,
                    });
                }
            }
        }
        alerts
    }

    /// (rule, subject) pairs currently raised.
    pub fn raised(&self) -> BTreeSet<(String, String)> {
        self.tracks.iter().filter(|(_, t)| t.raised).map(|(k, _)| k.clone()).collect()
    }

    /// True while some rule is above its fire level but not yet sustained.
    pub fn detection_pending(&self) -> bool {
        self.tracks.values().any(|t| !t.raised && t.streak > 0)
    }
}

/// Delivers each alert once to every consumer with a matching subscription,
/// ordered by consumer then rule id.
pub fn dispatch(alerts: &[Alert], subscriptions: &[Subscription]) -> Vec<(Consumer, Alert)> {
    let mut out = Vec::new();
    for alert in alerts {
        let consumers: BTreeSet<Consumer> =
            subscriptions.iter().filter(|s| s.matches(alert)).map(|s| s.consumer).collect();
        out.extend(consumers.into_iter().map(|c| (c, alert.clone())));
    }
    out.sort_by(|a, b| (a.0, &a.1.rule_id).cmp(&(b.0, &b.1.rule_id)));
    out
}
