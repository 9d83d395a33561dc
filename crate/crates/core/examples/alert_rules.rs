//! Threshold rules with a sustain count and hysteresis, fed a synthetic
//! CPU trace, and the routing of the resulting alerts.

use shiftsim::monitor::{
    dispatch, AggregateKind, AlertRule, AlertRuleSpec, Consumer, MetricSample, MonitorState, RuleSelector, SourceKind,
    Subscription,
};
use shiftsim::time::SimTime;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rule = AlertRule::from_spec(&AlertRuleSpec {
        id: "edge-cpu".into(),
        source: SourceKind::NodeCpu,
        subject: "*".into(),
        aggregate: AggregateKind::SlidingMean,
        window_s: Some(15.0),
        fire: 0.9,
        clear: Some(0.7),
        sustain: 2,
        notify: None,
    })?;
    let mut monitor = MonitorState::new(vec![rule])?;
    let subs = [
        Subscription { consumer: Consumer::ResourceLayer, selector: RuleSelector::Source(SourceKind::NodeCpu) },
        Subscription { consumer: Consumer::ServiceLayer, selector: RuleSelector::Rule("edge-cpu".into()) },
    ];

    let trace = [0.5, 0.6, 0.95, 0.97, 0.99, 0.9, 0.8, 0.6, 0.4, 0.3];
    for (i, v) in trace.iter().enumerate() {
        let t = SimTime::from_secs(i as u64 * 5);
        monitor.ingest_sample(MetricSample { source: SourceKind::NodeCpu, subject: "mec".into(), value: *v, timestamp: t })?;
        let alerts = monitor.evaluate_rules(t);
        for (consumer, a) in dispatch(&alerts, &subs) {
            println!("t={:>3}s {} {} at {:.3} -> {}", i * 5, a.rule_id, a.direction.as_str(), a.value, consumer.as_str());
        }
    }
    Ok(())
}
