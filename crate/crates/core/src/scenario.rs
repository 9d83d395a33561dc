//! Scenario files: infrastructure, services with their alert rules, a
//! script of shortage events, delay ranges, monitoring settings and the
//! simulated duration, as one strict JSON document.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::{AlertRule, MonitorError, MonitorState};
use crate::servicemodel::{validate_service, ServiceDoc, ServiceError, ServiceSpec};
use crate::simengine::DelayConfig;
use crate::time::SimTime;
use crate::topology::{build_infrastructure, Infrastructure, TopologyError, TopologySpec};

pub const DEFAULT_SAMPLING_PERIOD_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorDoc {
    pub sampling_period_s: f64,
}

impl Default for MonitorDoc {
    fn default() -> Self {
        MonitorDoc { sampling_period_s: DEFAULT_SAMPLING_PERIOD_S }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKindDoc {
    Fail,
    Recover,
    LoadChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventDoc {
    pub t: f64,
    pub kind: EventKindDoc,
    pub args: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElementArgs {
    element: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadArgs {
    service: String,
    factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub infrastructure: TopologySpec,
    pub services: Vec<ServiceDoc>,
    #[serde(default)]
    pub events: Vec<EventDoc>,
    #[serde(default)]
    pub delays: DelayConfig,
    #[serde(default)]
    pub monitor: MonitorDoc,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioEvent {
    Fail { element: String },
    Recover { element: String },
    LoadChange { service: String, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedEvent {
    pub at: SimTime,
    pub event: ScenarioEvent,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub infrastructure: Infrastructure,
    /// In file order.
    pub services: Vec<ServiceSpec>,
    /// Alert rules per service id, in file order.
    pub alert_rules: BTreeMap<String, Vec<AlertRule>>,
    pub events: Vec<TimedEvent>,
    pub delays: DelayConfig,
    pub sampling_period: SimTime,
    pub duration: SimTime,
}

impl Scenario {
    pub fn all_rules(&self) -> Vec<AlertRule> {
        self.services.iter().flat_map(|s| self.alert_rules[&s.service_id].iter().cloned()).collect()
    }

    pub fn service(&self, id: &str) -> Option<&ServiceSpec> {
        self.services.iter().find(|s| s.service_id == id)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{file}: cannot read: {source}")]
    Io { file: PathBuf, source: std::io::Error },
    #[error("{file}: {location}: {message}")]
    Parse { file: PathBuf, location: String, message: String },
    #[error("{file}: infrastructure: {source}")]
    Topology { file: PathBuf, source: TopologyError },
    #[error("{file}: services[{index}] ({service}): {source}")]
    Service { file: PathBuf, index: usize, service: String, source: ServiceError },
    #[error("{file}: services[{index}].alert_rules: {source}")]
    Rule { file: PathBuf, index: usize, source: MonitorError },
    #[error("{file}: {location}: {message}")]
    Invalid { file: PathBuf, location: String, message: String },
}

impl ScenarioError {
    /// Path within the document (or `line:column` for syntax errors).
    pub fn location(&self) -> String {
        match self {
            ScenarioError::Io { .. } => String::new(),
            ScenarioError::Parse { location, .. } | ScenarioError::Invalid { location, .. } => location.clone(),
            ScenarioError::Topology { .. } => "infrastructure".to_string(),
            ScenarioError::Service { index, .. } => format!("services[{index}]"),
            ScenarioError::Rule { index, .. } => format!("services[{index}].alert_rules"),
        }
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { file: path.to_path_buf(), source })?;
    parse_scenario_str(&text, path)
}

/// Parses `text`; `file` is only used in error messages.
pub fn parse_scenario_str(text: &str, file: &Path) -> Result<Scenario, ScenarioError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let inner = e.inner();
        let location = if inner.is_syntax() || inner.is_eof() {
            format!("line {} column {}", inner.line(), inner.column())
        } else {
            e.path().to_string()
        };
        ScenarioError::Parse { file: file.to_path_buf(), location, message: inner.to_string() }
    })?;
    de.end().map_err(|e| ScenarioError::Parse {
        file: file.to_path_buf(),
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    validate_doc(&doc, file)
}

pub fn validate_doc(doc: &ScenarioDoc, file: &Path) -> Result<Scenario, ScenarioError> {
    let invalid = |location: String, message: String| ScenarioError::Invalid { file: file.to_path_buf(), location, message };
    let infrastructure = build_infrastructure(&doc.infrastructure)
        .map_err(|source| ScenarioError::Topology { file: file.to_path_buf(), source })?;

    let mut services = Vec::new();
    let mut alert_rules = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (index, sdoc) in doc.services.iter().enumerate() {
        let spec = validate_service(sdoc).map_err(|source| ScenarioError::Service {
            file: file.to_path_buf(),
            index,
            service: sdoc.id.clone(),
            source,
        })?;
        if !seen.insert(spec.service_id.clone()) || infrastructure.contains(&spec.service_id) {
            return Err(invalid(format!("services[{index}].id"), format!("id {:?} is already in use", spec.service_id)));
        }
        let rules = sdoc
            .alert_rules
            .iter()
            .map(AlertRule::from_spec)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| ScenarioError::Rule { file: file.to_path_buf(), index, source })?;
        alert_rules.insert(spec.service_id.clone(), rules);
        services.push(spec);
    }
    let all_rules: Vec<AlertRule> = services.iter().flat_map(|s| alert_rules[&s.service_id].iter().cloned()).collect();
    MonitorState::new(all_rules).map_err(|e| invalid("services[].alert_rules".to_string(), e.to_string()))?;

    if !(doc.duration_s.is_finite() && doc.duration_s > 0.0) {
        return Err(invalid("duration_s".into(), "duration must be positive".into()));
    }
    let duration = SimTime::from_secs_f64(doc.duration_s);
    if duration == SimTime::ZERO {
        return Err(invalid("duration_s".into(), "duration must be at least 1 ms".into()));
    }
    if !(doc.monitor.sampling_period_s.is_finite() && doc.monitor.sampling_period_s >= 0.001) {
        return Err(invalid("monitor.sampling_period_s".into(), "sampling period must be at least 1 ms".into()));
    }
    doc.delays.validate().map_err(|e| invalid("delays".into(), e.to_string()))?;

    let mut events = Vec::new();
    for (i, e) in doc.events.iter().enumerate() {
        let loc = format!("events[{i}]");
        if !(e.t.is_finite() && e.t >= 0.0) {
            return Err(invalid(format!("{loc}.t"), "event time must be finite and non-negative".into()));
        }
        let args = serde_json::Value::Object(e.args.clone());
        let event = match e.kind {
            EventKindDoc::Fail | EventKindDoc::Recover => {
                let a: ElementArgs =
                    serde_json::from_value(args).map_err(|err| invalid(format!("{loc}.args"), err.to_string()))?;
                if !infrastructure.contains(&a.element) {
                    return Err(invalid(format!("{loc}.args.element"), format!("unknown element {:?}", a.element)));
                }
                if e.kind == EventKindDoc::Fail {
                    ScenarioEvent::Fail { element: a.element }
                } else {
                    ScenarioEvent::Recover { element: a.element }
                }
            }
            EventKindDoc::LoadChange => {
                let a: LoadArgs =
                    serde_json::from_value(args).map_err(|err| invalid(format!("{loc}.args"), err.to_string()))?;
                if !seen.contains(&a.service) {
                    return Err(invalid(format!("{loc}.args.service"), format!("unknown service {:?}", a.service)));
                }
                if !(a.factor.is_finite() && a.factor > 0.0) {
                    return Err(invalid(format!("{loc}.args.factor"), "load factor must be positive".into()));
                }
                ScenarioEvent::LoadChange { service: a.service, factor: a.factor }
            }
        };
        events.push(TimedEvent { at: SimTime::from_secs_f64(e.t), event });
    }

    Ok(Scenario {
        infrastructure,
        services,
        alert_rules,
        events,
        delays: doc.delays,
        sampling_period: SimTime::from_secs_f64(doc.monitor.sampling_period_s),
        duration,
    })
}

/// Inverse of [`validate_doc`].
pub fn to_doc(scenario: &Scenario) -> ScenarioDoc {
    let services = scenario
        .services
        .iter()
        .map(|s| {
            let mut d = s.to_doc();
            d.alert_rules = scenario.alert_rules[&s.service_id].iter().map(AlertRule::to_spec).collect();
            d
        })
        .collect();
    let events = scenario
        .events
        .iter()
        .map(|e| {
            let (kind, args) = match &e.event {
                ScenarioEvent::Fail { element } => (EventKindDoc::Fail, serde_json::json!({ "element": element })),
                ScenarioEvent::Recover { element } => (EventKindDoc::Recover, serde_json::json!({ "element": element })),
                ScenarioEvent::LoadChange { service, factor } => {
                    (EventKindDoc::LoadChange, serde_json::json!({ "service": service, "factor": factor }))
                }
            };
            let serde_json::Value::Object(args) = args else { unreachable!() };
            EventDoc { t: e.at.as_secs_f64(), kind, args }
        })
        .collect();
    ScenarioDoc {
        infrastructure: scenario.infrastructure.to_spec(),
        services,
        events,
        delays: scenario.delays,
        monitor: MonitorDoc { sampling_period_s: scenario.sampling_period.as_secs_f64() },
        duration_s: scenario.duration.as_secs_f64(),
    }
}

/// Pretty-printed scenario document.
pub fn emit(scenario: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(&to_doc(scenario)).expect("scenario documents serialize");
    s.push('\n');
    s
}
