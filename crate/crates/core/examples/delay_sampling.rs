//! Enactment delays drawn from the seeded generator: the same seed always
//! gives the same timeline.

use shiftsim::simengine::{sample_delay, DelayConfig, DelayKind, RngState};

fn main() {
    let cfg = DelayConfig::default();
    for seed in [42, 42, 43] {
        let mut rng = RngState::new(seed);
        let draws: Vec<String> = [DelayKind::VnfTeardown, DelayKind::VnfInstantiate, DelayKind::VmMigrate, DelayKind::RouteUpdate]
            .iter()
            .map(|k| format!("{} {:.2}s", k.as_str(), sample_delay(*k, &cfg, &mut rng)))
            .collect();
        println!("seed {seed}: {}", draws.join(", "));
    }
    let mut rng = RngState::new(1);
    let (lo, hi) = (0..10_000).map(|_| sample_delay(DelayKind::VmMigrate, &cfg, &mut rng)).fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
    println!("10000 migrations: {lo:.2}..{hi:.2} s (configured {:?})", cfg.vm_migrate);
}
